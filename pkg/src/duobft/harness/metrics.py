"""Client-observed latency and throughput figures from a trace."""

from __future__ import annotations

import statistics
from dataclasses import asdict, dataclass, field
from typing import Optional

from duobft.harness.checkers import view_changes_after


@dataclass(frozen=True)
class LatencySummary:
    count: int
    p50: Optional[float]
    p95: Optional[float]
    p99: Optional[float]


@dataclass(frozen=True)
class Metrics:
    latency: dict[str, LatencySummary] = field(default_factory=dict)
    throughput: float = 0.0  # fully accepted commands per simulated second
    throughput_by_model: dict[str, float] = field(default_factory=dict)
    completed: int = 0
    view_changes: int = 0
    messages: int = 0
    messages_per_command: Optional[float] = None
    duration_ms: int = 0
    approximate_latency: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def _summary(values: list[int]) -> LatencySummary:
    if not values:
        return LatencySummary(0, None, None, None)
    if len(values) == 1:
        v = float(values[0])
        return LatencySummary(1, v, v, v)
    cuts = statistics.quantiles(values, n=100, method="inclusive")
    return LatencySummary(len(values), float(statistics.median(values)), cuts[94], cuts[98])


def compute_metrics(records: list[dict]) -> Metrics:
    header = records[0] if records and records[0].get("kind") == "header" else {}
    end = records[-1] if records and records[-1].get("kind") == "end" else {}
    wanted = {int(c): ({"HYBRID", "BFT"} if m == "BOTH" else {m})
              for c, m in header.get("clients", {}).items()}
    submit_at: dict[tuple[int, int], int] = {}
    done: dict[tuple[int, int], set[str]] = {}
    samples: dict[str, list[int]] = {}
    last = 0
    for rec in records:
        kind = rec.get("kind")
        if kind == "submit":
            submit_at[(rec["client"], rec["seq"])] = rec["t"]
        elif kind == "accept":
            key = (rec["client"], rec["seq"])
            if key in submit_at:
                samples.setdefault(rec["model"], []).append(rec["t"] - submit_at[key])
                done.setdefault(key, set()).add(rec["model"])
                last = max(last, rec["t"])
    completed = sum(1 for key, models in done.items() if models >= wanted.get(key[0], set()))
    start = min(submit_at.values(), default=0)
    duration = max(last - start, 0)
    per_second = (lambda k: k * 1000.0 / duration) if duration else (lambda k: 0.0)
    messages = int(end.get("messages", 0))
    return Metrics(
        latency={m: _summary(v) for m, v in sorted(samples.items())},
        throughput=per_second(completed),
        throughput_by_model={m: per_second(len(v)) for m, v in sorted(samples.items())},
        completed=completed,
        view_changes=view_changes_after(records) if header else 0,
        messages=messages,
        messages_per_command=(messages / completed) if completed else None,
        duration_ms=duration,
        approximate_latency=bool(header.get("approximate_latency", False)),
    )


def format_table(metrics: Metrics) -> str:
    rows = [f"{'model':<8} {'count':>6} {'p50':>9} {'p95':>9} {'p99':>9}"]
    for model, s in metrics.latency.items():
        cell = lambda v: f"{v:9.1f}" if v is not None else f"{'-':>9}"
        rows.append(f"{model:<8} {s.count:>6} {cell(s.p50)} {cell(s.p95)} {cell(s.p99)}")
    mpc = f"{metrics.messages_per_command:.1f}" if metrics.messages_per_command else "-"
    rows.append(f"throughput {metrics.throughput:.1f} cmd/s  completed {metrics.completed}  "
                f"view changes {metrics.view_changes}  msgs/cmd {mpc}")
    if metrics.approximate_latency:
        rows.append("latency matrix is an interpolated approximation")
    return "\n".join(rows)


def metrics_line(metrics: Metrics, **extra) -> str:
    """One machine-readable ``key=value`` line."""
    parts = [f"{k}={v}" for k, v in extra.items()]
    for model, s in metrics.latency.items():
        parts += [f"{model.lower()}_p50={s.p50}", f"{model.lower()}_p95={s.p95}",
                  f"{model.lower()}_p99={s.p99}"]
    parts += [f"throughput={metrics.throughput:.3f}", f"completed={metrics.completed}",
              f"view_changes={metrics.view_changes}", f"messages={metrics.messages}"]
    return " ".join(parts)
