"""``duobft-sim``: run scenarios, re-check traces, sweep parameters, print quorum tables.

Exit status: 0 when every verdict passes, 1 on any FAIL, 2 for unreadable
input (bad scenario file, truncated trace).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from duobft.harness.checkers import check_all
from duobft.harness.explore import BEHAVIORS, explore
from duobft.harness.metrics import compute_metrics, format_table, metrics_line
from duobft.harness.scenario import Scenario, ScenarioError, load_scenario, run
from duobft.quorum import ParameterError, duobft_params, flexminbft_params
from duobft.simnet.sim import EVENTS, FULL
from duobft.simnet.trace import TraceError, read_trace, write_trace

OUT_ENV = "DUOBFT_OUT"


def int_range(text: str) -> list[int]:
    """``"1..4"`` or ``"1,3,5"`` (or a mix) to a list of ints."""
    out: list[int] = []
    for part in text.split(","):
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _out_dir(arg: str | None) -> Path:
    path = Path(arg or os.environ.get(OUT_ENV, "."))
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------- run

def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    seeds = [args.seed] if args.seed is not None else list(sc.seeds)
    if args.trace and len(seeds) > 1:
        print("--trace names one file; give --seed or use --out", file=sys.stderr)
        return 2
    out = None if args.trace else _out_dir(args.out)
    status = 0
    for seed in seeds:
        result = run(sc, seed, args.level)
        path = Path(args.trace) if args.trace else out / f"{Path(args.scenario).stem}-seed{seed}.jsonl"
        write_trace(result.records, path)
        metrics = compute_metrics(result.records)
        verdicts = check_all(result.records)
        print(f"seed {seed}: trace {path}")
        print(format_table(metrics))
        print(metrics_line(metrics, seed=seed))
        for v in verdicts:
            print(v.line())
        if not all(verdicts):
            status = 1
    return status


# -------------------------------------------------------------- check

def cmd_check(args) -> int:
    status = 0
    for name in args.traces:
        try:
            records = read_trace(name)
            verdicts = check_all(records)
        except TraceError as exc:
            print(f"ERROR {name}: {exc}")
            status = max(status, 2)
            continue
        for v in verdicts:
            print(f"{name}: {v.line()}")
        if not all(verdicts):
            status = max(status, 1)
    return status


# -------------------------------------------------------------- sweep

def _sweep_point(job: tuple[Scenario, str, int | float, int]) -> str:
    sc, key, value, seed = job
    records = run(sc, seed).records
    ok = all(check_all(records))
    return metrics_line(compute_metrics(records), **{key: value}, seed=seed,
                        checks="PASS" if ok else "FAIL")


def _parse_param(text: str) -> tuple[str, list]:
    key, _, values = text.partition("=")
    if not key or not values:
        raise ScenarioError(f"--param wants key=v1,v2,... (got {text!r})")
    parsed = [float(v) if "." in v else int(v) for v in values.split(",")]
    return key.strip(), parsed


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario)
    key, values = _parse_param(args.param)
    seeds = [args.seed] if args.seed is not None else list(sc.seeds)
    jobs = []
    for value in values:
        try:
            point = sc.replace(**{key: value})
        except TypeError:
            raise ScenarioError(f"unknown scenario field {key!r}") from None
        jobs.extend((point, key, value, s) for s in seeds)
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        rows = list(pool.map(_sweep_point, jobs))
    for row in rows:
        print(row)
    return 1 if any("checks=FAIL" in row for row in rows) else 0


# ------------------------------------------------------------- matrix

def cmd_matrix(args) -> int:
    fs = int_range(args.f)
    print(f"{'n':>4} {'f':>3} {'hybrid':>7} {'bft':>5} {'vc':>4} {'req_vc':>7}")
    for f in fs:
        if args.protocol == "duobft":
            points = [(None, f)]
        else:
            points = [(n, f) for n in (int_range(args.n) if args.n else [3 * f + 1])]
        for n, ff in points:
            try:
                p = duobft_params(ff) if n is None else flexminbft_params(n, ff)
            except ParameterError as exc:
                print(f"{n:>4} {ff:>3}  unattainable: {exc}")
                continue
            bft = "-" if p.commit_bft is None else str(p.commit_bft)
            print(f"{p.n:>4} {p.f:>3} {p.commit_hybrid:>7} {bft:>5} {p.view_change:>4} "
                  f"{p.req_view_change:>7}")
    return 0


# ------------------------------------------------------------ explore

def cmd_explore(args) -> int:
    for behavior in args.behavior or BEHAVIORS:
        o = explore(behavior)
        print(f"{behavior:<12} states={o.states} hybrid_violations={o.hybrid_violations} "
              f"bft_violations={o.bft_violations}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="duobft-sim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario, write traces and metrics")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", help="trace file (single seed)")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    p.add_argument("--level", choices=(EVENTS, FULL), default=EVENTS)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="re-run the checkers on stored traces")
    p.add_argument("traces", nargs="+")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("sweep", help="one metrics row per parameter value")
    p.add_argument("scenario")
    p.add_argument("--param", required=True, help="e.g. batch_size=10,50,100,200,400")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("matrix", help="print quorum parameters")
    p.add_argument("--protocol", choices=("duobft", "flex_minbft"), default="duobft")
    p.add_argument("--f", default="1..4")
    p.add_argument("--n", help="replica counts for flex_minbft, e.g. 3..10")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("explore", help="exhaustive small-model interleaving search")
    p.add_argument("--behavior", action="append", choices=BEHAVIORS)
    p.set_defaults(func=cmd_explore)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
