"""Trace records and their newline-delimited JSON form.

A trace is a list of flat dicts. The first is ``{"kind": "header", ...}``,
the last ``{"kind": "end", ...}``; between them every record carries ``t``
(simulated ms), ``node`` and ``kind``. Replica notes keep their fields
(``commit`` has model, lane, height, digest); client notes are ``submit``,
``accept`` and ``client_done``. At the ``full`` level each delivery adds a
``deliver`` record whose ``msg`` is the hex of the message's canonical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator


class TraceError(ValueError):
    """Trace is unreadable or incomplete (distinct from a checker FAIL)."""


def dumps_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def to_jsonl(records: Iterable[dict]) -> str:
    return "".join(dumps_record(r) + "\n" for r in records)


def write_trace(records: Iterable[dict], path: str | Path) -> None:
    Path(path).write_text(to_jsonl(records))


def iter_records(text: str) -> Iterator[dict]:
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            yield json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError(f"line {lineno}: {exc}") from None


def read_trace(path: str | Path) -> list[dict]:
    return load_trace(Path(path).read_text())


def load_trace(text: str) -> list[dict]:
    records = list(iter_records(text))
    validate(records)
    return records


def validate(records: list[dict]) -> None:
    if not records or records[0].get("kind") != "header":
        raise TraceError("trace does not start with a header record")
    if records[-1].get("kind") != "end":
        raise TraceError("trace is truncated: no end record")
