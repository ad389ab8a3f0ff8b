"""Randomized fault-script suites over small deployments.

Each case is drawn from a seeded RNG, so ``draw_case(protocol, seed)`` always
returns the same scenario and a suite can be fanned out across processes.
"""

from __future__ import annotations

import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from duobft.harness.checkers import check_all
from duobft.harness.scenario import Protocol, Scenario, run
from duobft.simnet.faults import Behavior, FaultScript, NodeFault, Partition, Strategy

FAULT_KINDS = ("none", "crash", "drops", "duplication", "partition", "silent_primary",
               "equivocation")
SIZES = (4, 7, 10)


def cascading_silent(f: int, count: int) -> FaultScript:
    """Replica i stays silent while it is primary of view i, for i < count."""
    return FaultScript(nodes={i: NodeFault(Behavior.SILENT_PRIMARY, views=(i,))
                              for i in range(count)})


def _faults(kind: str, rng: random.Random, n: int, f: int, clients: int) -> FaultScript:
    if kind == "crash":
        victims = rng.sample(range(n), rng.randint(1, f))
        return FaultScript(nodes={r: NodeFault(Behavior.CRASH, at=rng.randint(0, 15))
                                  for r in victims})
    if kind == "drops":
        return FaultScript(drop_prob=0.3)
    if kind == "duplication":
        return FaultScript(dup_prob=0.3, jitter=3)
    if kind == "partition":
        members = list(range(n + clients))
        rng.shuffle(members)
        cut = rng.randint(1, len(members) - 1)
        start = rng.randint(0, 40)
        end = start + rng.randint(20, 400)
        part = Partition(start, end, (frozenset(members[:cut]), frozenset(members[cut:])))
        return FaultScript(partitions=(part,), gst=end)
    if kind == "silent_primary":
        return cascading_silent(f, rng.randint(1, f))
    if kind == "equivocation":
        return FaultScript(nodes={0: NodeFault(Behavior.EQUIVOCATE, strategy=Strategy.NO_USIG)})
    return FaultScript()


def draw_case(protocol: Protocol, seed: int) -> tuple[str, Scenario]:
    rng = random.Random(f"case:{protocol.value}:{seed}")
    n = rng.choice(SIZES)
    f = (n - 1) // 3
    kind = FAULT_KINDS[seed % len(FAULT_KINDS)]
    clients = rng.randint(1, 3)
    mix = (("hybrid", 1.0),) if protocol is Protocol.FLEX_MINBFT else (
        rng.choice([(("hybrid", 1.0),), (("bft", 1.0),), (("both", 1.0),),
                    (("hybrid", 0.5), ("bft", 0.5))]))
    sc = Scenario(
        protocol=protocol, f=f, n=n if protocol is Protocol.FLEX_MINBFT else None,
        instances=rng.choice((2, 3)) if protocol is Protocol.MC_DUOBFT else 1,
        batch_size=rng.randint(1, 4), payload_size=16, clients=clients,
        requests_per_client=rng.randint(1, 4), response_mix=mix,
        base_timeout=500, client_timeout=300, max_time=120_000, retransmit_interval=5,
        key_seed=seed, seeds=(seed,),
        faults=_faults(kind, rng, n, f, clients),
    )
    return kind, sc


@dataclass(frozen=True)
class CaseResult:
    protocol: str
    seed: int
    kind: str
    n: int
    failures: tuple[str, ...]


def run_case(protocol: Protocol, seed: int) -> CaseResult:
    kind, sc = draw_case(protocol, seed)
    verdicts = check_all(run(sc, seed).records)
    return CaseResult(protocol.value, seed, kind, sc.replica_count,
                      tuple(v.line() for v in verdicts if not v.passed))


def _run_case_args(args: tuple[Protocol, int]) -> CaseResult:
    return run_case(*args)


def run_suite(protocol: Protocol, seeds, workers: int | None = None) -> list[CaseResult]:
    jobs = [(protocol, s) for s in seeds]
    if workers == 1:
        return [_run_case_args(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_case_args, jobs, chunksize=8))
