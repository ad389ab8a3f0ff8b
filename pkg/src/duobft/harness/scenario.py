"""Scenario files: YAML documents describing one simulated deployment.

Top-level keys (all optional except ``protocol`` and ``f``)::

    protocol: duobft | mc_duobft | flex_minbft
    f: 1
    n: 4                      # flex_minbft only; duobft always uses 3f+1
    comm_pattern: quadratic   # or linear
    pacing: bft_qc            # or hybrid_qc
    instances: 1              # lanes for mc_duobft
    batch_size: 200
    payload_size: 512
    clients: 4
    requests_per_client: 10
    response_mix: {hybrid: 0.5, bft: 0.5}   # fractions of clients; "both" allowed
    matrix: unit              # or wan10
    base_timeout: 1000        # replica progress timer, ms
    client_timeout: 2000
    max_time: 600000
    retransmit_interval: 50
    key_seed: 0
    seeds: [1, 2, 3]
    faults:
      nodes:
        0: {behavior: silent_primary, views: [0]}
        2: {behavior: crash, at: 500}
      partitions:
        - {start: 100, end: 400, groups: [[0, 1], [2, 3]]}
      drop_prob: 0.0
      dup_prob: 0.0
      jitter: 0
      gst: 0
      pre_gst_delay: 0

Unknown keys are rejected at every level.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from duobft.crypto import keygen
from duobft.duobft import DuobftReplica
from duobft.messages import ResponseModel
from duobft.minbft import MinbftReplica
from duobft.quorum import QuorumParams, duobft_params, flexminbft_params
from duobft.replica import CommPattern, Pacing, ReplicaConfig
from duobft.simnet.client import Client
from duobft.simnet.faults import (
    Behavior,
    FaultScript,
    NodeFault,
    Partition,
    Strategy,
    replica_class,
)
from duobft.simnet.latency import assign_regions, builtin
from duobft.simnet.sim import EVENTS, SimResult, Simulation
from duobft.usig import UsigInstance


class ScenarioError(ValueError):
    pass


class Protocol(enum.Enum):
    FLEX_MINBFT = "flex_minbft"
    DUOBFT = "duobft"
    MC_DUOBFT = "mc_duobft"


@dataclass(frozen=True)
class Scenario:
    protocol: Protocol
    f: int
    n: Optional[int] = None
    comm_pattern: CommPattern = CommPattern.QUADRATIC
    pacing: Pacing = Pacing.BFT_QC
    instances: int = 1
    batch_size: int = 200
    payload_size: int = 512
    clients: int = 4
    requests_per_client: int = 10
    response_mix: tuple[tuple[str, float], ...] = (("hybrid", 1.0),)
    matrix: str = "unit"
    base_timeout: int = 1000
    client_timeout: int = 2000
    max_time: int = 600_000
    retransmit_interval: int = 50
    key_seed: int = 0
    seeds: tuple[int, ...] = (1,)
    faults: FaultScript = field(default_factory=FaultScript)

    def __post_init__(self) -> None:
        self.params()  # raises on unconstructible quorums
        self.faults.check_budget(self.f)
        for r in self.faults.nodes:
            if not 0 <= r < self.replica_count:
                raise ScenarioError(f"fault script names replica {r}, outside 0..{self.replica_count - 1}")
        if self.instances < 1:
            raise ScenarioError("instances must be at least 1")
        if self.protocol is not Protocol.MC_DUOBFT and self.instances != 1:
            raise ScenarioError("instances > 1 needs protocol mc_duobft")
        if self.protocol is Protocol.FLEX_MINBFT and dict(self.response_mix).get("bft", 0) > 0:
            raise ScenarioError("flex_minbft only answers under the hybrid model")
        mix = dict(self.response_mix)
        if set(mix) - {"hybrid", "bft", "both"}:
            raise ScenarioError(f"unknown response model in mix: {sorted(set(mix) - {'hybrid', 'bft', 'both'})}")
        if abs(sum(mix.values()) - 1.0) > 1e-9:
            raise ScenarioError("response_mix fractions must sum to 1")
        builtin(self.matrix)

    @property
    def family(self) -> str:
        return "minbft" if self.protocol is Protocol.FLEX_MINBFT else "duobft"

    @property
    def replica_count(self) -> int:
        if self.protocol is Protocol.FLEX_MINBFT:
            return self.n if self.n is not None else 3 * self.f + 1
        return 3 * self.f + 1

    def params(self) -> QuorumParams:
        if self.protocol is Protocol.FLEX_MINBFT:
            return flexminbft_params(self.replica_count, self.f)
        if self.n is not None and self.n != 3 * self.f + 1:
            raise ScenarioError("duobft needs n = 3f + 1")
        return duobft_params(self.f)

    def client_models(self) -> list[ResponseModel]:
        """Response model per client, in client order, from the mix fractions."""
        out: list[ResponseModel] = []
        names = {"hybrid": ResponseModel.HYBRID, "bft": ResponseModel.BFT, "both": ResponseModel.BOTH}
        remaining = self.clients
        mix = list(self.response_mix)
        for i, (name, frac) in enumerate(mix):
            k = remaining if i == len(mix) - 1 else min(remaining, round(frac * self.clients))
            out.extend([names[name]] * k)
            remaining -= k
        return out

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# parsing

_TOP = {f.name for f in dataclasses.fields(Scenario)}
_FAULT_KEYS = {"nodes", "partitions", "drop_prob", "dup_prob", "jitter", "gst", "pre_gst_delay"}
_NODE_KEYS = {"behavior", "at", "views", "strategy", "prob"}
_PART_KEYS = {"start", "end", "groups"}


def _reject_unknown(got: dict, allowed: set, where: str) -> None:
    extra = set(got) - allowed
    if extra:
        raise ScenarioError(f"unknown key(s) in {where}: {', '.join(sorted(map(str, extra)))}")


def _enum(cls, value, where: str):
    try:
        return cls(str(value).lower())
    except ValueError:
        choices = ", ".join(m.value for m in cls)
        raise ScenarioError(f"{where}: {value!r} is not one of {choices}") from None


def parse_faults(doc: Optional[dict]) -> FaultScript:
    if not doc:
        return FaultScript()
    if not isinstance(doc, dict):
        raise ScenarioError("faults must be a mapping")
    _reject_unknown(doc, _FAULT_KEYS, "faults")
    nodes = {}
    for key, spec in (doc.get("nodes") or {}).items():
        if not isinstance(spec, dict):
            raise ScenarioError(f"faults.nodes.{key} must be a mapping")
        _reject_unknown(spec, _NODE_KEYS, f"faults.nodes.{key}")
        nodes[int(key)] = NodeFault(
            behavior=_enum(Behavior, spec.get("behavior", "correct"), f"faults.nodes.{key}.behavior"),
            at=int(spec.get("at", 0)),
            views=tuple(int(v) for v in spec.get("views", (0,))),
            strategy=_enum(Strategy, spec.get("strategy", "no_usig"), f"faults.nodes.{key}.strategy"),
            prob=float(spec.get("prob", 0.0)),
        )
    parts = []
    for i, spec in enumerate(doc.get("partitions") or ()):
        _reject_unknown(spec, _PART_KEYS, f"faults.partitions[{i}]")
        parts.append(Partition(int(spec["start"]), int(spec["end"]),
                               tuple(frozenset(int(x) for x in g) for g in spec["groups"])))
    return FaultScript(
        nodes=nodes, partitions=tuple(parts),
        drop_prob=float(doc.get("drop_prob", 0.0)), dup_prob=float(doc.get("dup_prob", 0.0)),
        jitter=int(doc.get("jitter", 0)), gst=int(doc.get("gst", 0)),
        pre_gst_delay=int(doc.get("pre_gst_delay", 0)),
    )


def parse_scenario(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a mapping")
    _reject_unknown(doc, _TOP, "scenario")
    for required in ("protocol", "f"):
        if required not in doc:
            raise ScenarioError(f"missing required key {required!r}")
    kw = dict(doc)
    kw["protocol"] = _enum(Protocol, doc["protocol"], "protocol")
    if "comm_pattern" in doc:
        kw["comm_pattern"] = _enum(CommPattern, doc["comm_pattern"], "comm_pattern")
    if "pacing" in doc:
        kw["pacing"] = _enum(Pacing, doc["pacing"], "pacing")
    if "response_mix" in doc:
        mix = doc["response_mix"]
        if not isinstance(mix, dict):
            raise ScenarioError("response_mix must be a mapping")
        kw["response_mix"] = tuple((str(k), float(v)) for k, v in mix.items())
    if "seeds" in doc:
        kw["seeds"] = tuple(int(s) for s in doc["seeds"])
    kw["faults"] = parse_faults(doc.get("faults"))
    for key in ("f", "n", "instances", "batch_size", "payload_size", "clients",
                "requests_per_client", "base_timeout", "client_timeout", "max_time",
                "retransmit_interval", "key_seed"):
        if key in kw and kw[key] is not None:
            kw[key] = int(kw[key])
    try:
        return Scenario(**kw)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from None


def load_scenario(path: str | Path) -> Scenario:
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"{path}: {exc}") from None
    return parse_scenario(doc)


# ---------------------------------------------------------------------------
# building and running

def header_for(sc: Scenario, seed: int, matrix_approx: bool, clients: list[Client]) -> dict:
    faulty = sc.faults.faulty()
    compromised = any(sc.faults.behavior(r).behavior is Behavior.COMPROMISED_USIG
                      or (sc.faults.behavior(r).behavior is Behavior.EQUIVOCATE
                          and sc.faults.behavior(r).strategy is Strategy.COMPROMISED_USIG)
                      for r in faulty)
    return {
        "format": 1,
        "family": sc.family,
        "n": sc.replica_count,
        "f": sc.f,
        "instances": sc.instances,
        "comm": sc.comm_pattern.value,
        "pacing": sc.pacing.value,
        "batch_size": sc.batch_size,
        "seed": seed,
        "matrix": sc.matrix,
        "approximate_latency": matrix_approx,
        "faulty": faulty,
        "honest": sc.faults.honest_logic(sc.replica_count),
        "compromised": compromised,
        "gst": sc.faults.gst,
        "clients": {str(c.id): c.model.name for c in clients},
    }


def build(sc: Scenario, seed: int, trace_level: str = EVENTS) -> Simulation:
    n = sc.replica_count
    params = sc.params()
    pairs = [keygen(sc.key_seed * 100_000 + r) for r in range(n)]
    keys = {r: pairs[r].public for r in range(n)}
    config = ReplicaConfig(batch_size=sc.batch_size, base_timeout=sc.base_timeout,
                           comm=sc.comm_pattern, pacing=sc.pacing, instances=sc.instances)
    default = MinbftReplica if sc.family == "minbft" else DuobftReplica
    replicas = []
    for r in range(n):
        cls = replica_class(sc.family, sc.faults.behavior(r)) or default
        replicas.append(cls(r, params, UsigInstance(r, pairs[r]), keys, config))
    clients = [Client(n + i, n, sc.f, model, sc.requests_per_client, sc.payload_size,
                      sc.client_timeout)
               for i, model in enumerate(sc.client_models())]
    matrix = builtin(sc.matrix)
    placement = assign_regions(matrix, n, len(clients))
    header = header_for(sc, seed, matrix.approximate, clients)
    return Simulation(replicas=replicas, clients=clients, matrix=matrix, placement=placement,
                      script=sc.faults, seed=seed, header=header, trace_level=trace_level,
                      max_time=sc.max_time, retransmit_interval=sc.retransmit_interval)


def run(sc: Scenario, seed: int, trace_level: str = EVENTS) -> SimResult:
    return build(sc, seed, trace_level).run()
