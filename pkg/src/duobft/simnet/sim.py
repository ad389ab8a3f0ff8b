"""Seeded discrete-event loop driving replicas and clients.

Events are ordered by (time, insertion sequence), so a run is a pure function
of its inputs and seed. Message loss is repaired by network-level
retransmission: a dropped attempt is retried with capped exponential backoff
until it gets through, which models the buffered-resend assumption of a
partially synchronous network. Timers use the same queue.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Optional

from duobft.messages import encode
from duobft.replica import BROADCAST, CancelTimer, Note, Send, SetTimer
from duobft.simnet.faults import (
    Behavior,
    Equivocator,
    FaultScript,
    Strategy,
    drops,
    silent_now,
)
from duobft.simnet.latency import LatencyMatrix

_DELIVER, _TIMER, _RETRY = 0, 1, 2

FULL = "full"
EVENTS = "events"


@dataclass
class SimResult:
    records: list[dict]
    stalled: bool
    end_time: int
    messages: int
    diagnostics: dict = field(default_factory=dict)


class Simulation:
    def __init__(self, *, replicas: list, clients: list, matrix: LatencyMatrix,
                 placement: dict[int, str], script: FaultScript, seed: int, header: dict,
                 trace_level: str = EVENTS, max_time: int = 600_000,
                 retransmit_interval: int = 50, retransmit_cap: int = 1000):
        self.replicas = replicas
        self.clients = clients
        self.nodes = {r.id: r for r in replicas} | {c.id: c for c in clients}
        self.n = len(replicas)
        self.matrix = matrix
        self.placement = placement
        self.script = script
        self.net_rng = random.Random(f"net:{seed}")
        self.fault_rng = random.Random(f"fault:{seed}")
        self.level = trace_level
        self.max_time = max_time
        self.retransmit_interval = retransmit_interval
        self.retransmit_cap = retransmit_cap
        self.queue: list = []
        self.seq = 0
        self.now = 0
        self.timer_gen: dict[tuple[int, str], int] = {}
        self.messages = 0
        self.records: list[dict] = [dict(header, kind="header")]
        self.filters = {}
        for r in replicas:
            fault = script.behavior(r.id)
            if fault.behavior is Behavior.EQUIVOCATE:
                self.filters[r.id] = Equivocator(r, self.n, fault.strategy)
            elif fault.behavior is Behavior.COMPROMISED_USIG:
                self.filters[r.id] = Equivocator(r, self.n, Strategy.COMPROMISED_USIG)

    # ---------------------------------------------------------------- queue

    def _push(self, at: int, kind: int, node: int, a, b) -> None:
        self.seq += 1
        heapq.heappush(self.queue, (at, self.seq, kind, node, a, b))

    def _crashed(self, node: int) -> bool:
        if node >= self.n:
            return False
        fault = self.script.behavior(node)
        return fault.behavior is Behavior.CRASH and self.now >= fault.at

    # -------------------------------------------------------------- actions

    def _apply(self, node: int, actions: list) -> None:
        filt = self.filters.get(node)
        if filt is not None:
            actions = filt.filter(actions, self.n)
        for act in actions:
            if isinstance(act, Send):
                self._send(node, act)
            elif isinstance(act, Note):
                if act.kind == "execute" and self.level != FULL:
                    continue
                rec = {"t": self.now, "node": node, "kind": act.kind}
                rec.update(act.data)
                self.records.append(rec)
            elif isinstance(act, SetTimer):
                key = (node, act.name)
                gen = self.timer_gen.get(key, 0) + 1
                self.timer_gen[key] = gen
                self._push(self.now + act.delay, _TIMER, node, act.name, gen)
            elif isinstance(act, CancelTimer):
                key = (node, act.name)
                self.timer_gen[key] = self.timer_gen.get(key, 0) + 1

    def _send(self, src: int, act: Send) -> None:
        if src < self.n:
            fault = self.script.behavior(src)
            if silent_now(self.nodes[src], fault):
                return
        else:
            fault = None
        targets = range(self.n) if act.dest == BROADCAST else (act.dest,)
        for dest in targets:
            if dest not in self.nodes:
                continue
            if dest == src:
                delay = self.matrix.one_way(self.placement[src], self.placement[src])
                self._push(self.now + delay, _DELIVER, dest, src, act.msg)
                continue
            if fault is not None and drops(fault, self.fault_rng):
                continue
            self.messages += 1
            self._attempt(src, dest, act.msg, 0)

    def _attempt(self, src: int, dest: int, msg, attempt: int) -> None:
        script = self.script
        blocked = any(p.separates(src, dest, self.now) for p in script.partitions)
        if blocked or (script.drop_prob and self.net_rng.random() < script.drop_prob):
            wait = min(self.retransmit_interval << min(attempt, 16), self.retransmit_cap)
            self._push(self.now + wait, _RETRY, dest, src, (msg, attempt + 1))
            return
        delay = self.matrix.one_way(self.placement[src], self.placement[dest])
        if script.jitter:
            delay += self.net_rng.randint(0, script.jitter)
        if self.now < script.gst and script.pre_gst_delay:
            delay += self.net_rng.randint(0, script.pre_gst_delay)
        self._push(self.now + delay, _DELIVER, dest, src, msg)
        if script.dup_prob and self.net_rng.random() < script.dup_prob:
            extra = self.net_rng.randint(1, 10 + script.jitter)
            self._push(self.now + delay + extra, _DELIVER, dest, src, msg)

    # ------------------------------------------------------------------ run

    def _clients_done(self) -> bool:
        return all(c.done for c in self.clients)

    def run(self) -> SimResult:
        for node_id in sorted(self.nodes):
            self._apply(node_id, self.nodes[node_id].start())
        while self.queue and not self._clients_done():
            at, _, kind, node, a, b = heapq.heappop(self.queue)
            if at > self.max_time:
                self.now = self.max_time
                break
            self.now = at
            if self._crashed(node):
                continue
            if kind == _DELIVER:
                if self.level == FULL:
                    self.records.append({"t": at, "node": node, "kind": "deliver", "src": a,
                                         "msg": encode(b).hex()})
                self._apply(node, self.nodes[node].handle(a, b))
            elif kind == _TIMER:
                if self.timer_gen.get((node, a)) != b:
                    continue
                if self.level == FULL:
                    self.records.append({"t": at, "node": node, "kind": "timer", "name": a})
                self._apply(node, self.nodes[node].on_timer(a))
            else:
                if self._crashed(a):
                    continue
                msg, attempt = b
                self._attempt(a, node, msg, attempt)
        stalled = not self._clients_done()
        diagnostics = self._diagnostics() if stalled else {}
        self.records.append({"kind": "end", "t": self.now, "stalled": stalled,
                             "messages": self.messages, "diagnostics": diagnostics})
        return SimResult(self.records, stalled, self.now, self.messages, diagnostics)

    def _diagnostics(self) -> dict:
        reps = {}
        for r in self.replicas:
            reps[str(r.id)] = {
                "view": r.view,
                "in_view_change": r.in_view_change,
                "pending": len(r.pending),
                "crashed": self._crashed(r.id),
            }
        waiting = {str(c.id): c.sequence for c in self.clients if not c.done}
        return {"replicas": reps, "clients_waiting": waiting, "queue": len(self.queue)}


def first_record(records: list[dict], kind: str, **match) -> Optional[dict]:
    for rec in records:
        if rec.get("kind") == kind and all(rec.get(k) == v for k, v in match.items()):
            return rec
    return None
