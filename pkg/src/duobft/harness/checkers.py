"""Safety and liveness verdicts computed from a finished trace.

Checkers only read trace records, so re-checking a stored trace gives the
same verdict. Only replicas whose protocol logic is honest (correct, crashed,
silent or lossy nodes) are held to the invariants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from duobft.simnet.trace import TraceError, validate


@dataclass(frozen=True)
class Verdict:
    passed: bool
    check: str
    model: Optional[str] = None
    detail: str = ""
    witness: tuple = field(default=(), compare=False)

    def __bool__(self) -> bool:
        return self.passed

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        scope = f"[{self.model}]" if self.model else ""
        return f"{tag} {self.check}{scope}" + (f": {self.detail}" if self.detail else "")


def _commits(records: list[dict], model: str, honest: set[int]) -> dict[int, list[dict]]:
    out: dict[int, list[dict]] = {}
    for rec in records:
        if rec.get("kind") == "commit" and rec.get("model") == model and rec["node"] in honest:
            out.setdefault(rec["node"], []).append(rec)
    return out


def check_safety(records: list[dict], model: str) -> Verdict:
    """Agreement and prefix consistency of committed blocks under ``model``.

    Also requires, per replica, that the BFT-committed sequence is a prefix of
    the hybrid one unless the run subverted a trusted counter.
    Raises :class:`TraceError` for a truncated or headerless trace.
    """
    validate(records)
    header = records[0]
    honest = set(header.get("honest", ()))
    name = "safety"
    per_node = _commits(records, model, honest)

    # each replica commits every lane contiguously from height 1
    for node, recs in sorted(per_node.items()):
        nxt: dict[int, int] = {}
        for rec in recs:
            lane = rec["lane"]
            want = nxt.get(lane, 1)
            if rec["height"] != want:
                return Verdict(False, name, model,
                               f"replica {node} committed lane {lane} height {rec['height']} "
                               f"out of order (expected {want})", (rec,))
            nxt[lane] = want + 1

    # agreement per (lane, height) across replicas; with contiguity this is prefix consistency
    first: dict[tuple[int, int], dict] = {}
    for node in sorted(per_node):
        for rec in per_node[node]:
            slot = (rec["lane"], rec["height"])
            seen = first.get(slot)
            if seen is None:
                first[slot] = rec
            elif seen["digest"] != rec["digest"]:
                return Verdict(False, name, model,
                               f"replicas {seen['node']} and {rec['node']} committed different "
                               f"blocks at lane {slot[0]} height {slot[1]}", (seen, rec))

    if model == "BFT" and not header.get("compromised", False):
        hybrid = _commits(records, "HYBRID", honest)
        for node, recs in sorted(per_node.items()):
            mine = {(r["lane"], r["height"]): r["digest"] for r in hybrid.get(node, ())}
            for rec in recs:
                if mine.get((rec["lane"], rec["height"])) != rec["digest"]:
                    return Verdict(False, name, model,
                                   f"replica {node}: BFT commit at lane {rec['lane']} height "
                                   f"{rec['height']} is not in its hybrid sequence", (rec,))
    return Verdict(True, name, model)


def check_liveness(records: list[dict], max_view_changes: Optional[int] = None) -> Verdict:
    """Every submitted command is accepted under each model its client asked for,
    and the view advances at most ``max_view_changes`` (default f + 1) times after GST."""
    validate(records)
    header = records[0]
    name = "liveness"
    wanted_by_client = {int(c): ({"HYBRID", "BFT"} if m == "BOTH" else {m})
                        for c, m in header.get("clients", {}).items()}
    submitted: set[tuple[int, int]] = set()
    accepted: dict[tuple[int, int], set[str]] = {}
    for rec in records:
        kind = rec.get("kind")
        if kind == "submit":
            submitted.add((rec["client"], rec["seq"]))
        elif kind == "accept":
            accepted.setdefault((rec["client"], rec["seq"]), set()).add(rec["model"])
    for cmd in sorted(submitted):
        missing = wanted_by_client.get(cmd[0], set()) - accepted.get(cmd, set())
        if missing:
            return Verdict(False, name, None,
                           f"client {cmd[0]} command {cmd[1]} never accepted under "
                           f"{', '.join(sorted(missing))}")
    end = records[-1]
    if end.get("stalled"):
        return Verdict(False, name, None, "run stalled before all clients finished")
    limit = header["f"] + 1 if max_view_changes is None else max_view_changes
    gst = header.get("gst", 0)
    changes = view_changes_after(records, gst)
    if changes > limit:
        return Verdict(False, name, None,
                       f"{changes} view changes after GST (limit {limit})")
    return Verdict(True, name, None)


def view_changes_after(records: list[dict], gst: int = 0) -> int:
    """How far the view number advanced at honest replicas from ``gst`` to the end.

    Views skipped on the way (a silent primary never announcing its view)
    count too, unlike a count of installed views. A view entered before GST
    and installed after it is not counted.
    """
    honest = set(records[0].get("honest", ()))
    before, final = 0, 0
    for rec in records:
        kind = rec.get("kind")
        if kind not in ("view", "view_change") or rec.get("node") not in honest:
            continue
        view = rec["view"] if kind == "view" else rec["new_view"]
        final = max(final, view)
        if rec["t"] < gst:
            before = max(before, view)
    return final - before


def check_all(records: list[dict]) -> list[Verdict]:
    models = ["HYBRID"] if records[0].get("family") == "minbft" else ["HYBRID", "BFT"]
    verdicts = [check_safety(records, m) for m in models]
    verdicts.append(check_liveness(records))
    return verdicts


__all__ = ["TraceError", "Verdict", "check_all", "check_liveness", "check_safety",
           "view_changes_after"]
