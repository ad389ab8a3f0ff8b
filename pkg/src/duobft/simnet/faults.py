"""Declarative fault scripts and the Byzantine node behaviors they select."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Optional

from duobft.messages import (
    Batch,
    Block,
    Command,
    Prepare,
    Propose,
    ViewChange,
    prepare_statement,
    propose_statement,
    view_change_statement,
)
from duobft.minbft import MinbftReplica
from duobft.replica import BROADCAST, Send
from duobft.usig import UsigCertificate, UsigMode, honest_next


class Behavior(enum.Enum):
    CORRECT = "correct"
    CRASH = "crash"
    SILENT_PRIMARY = "silent_primary"
    EQUIVOCATE = "equivocate"
    COMPROMISED_USIG = "compromised_usig"
    DROP_OUTBOUND = "drop_outbound"
    TRUNCATE_LOG = "truncate_log"
    REPROPOSE = "repropose"


# behaviors whose state machine stays honest: checkers hold them to the invariants
HONEST_LOGIC = {Behavior.CORRECT, Behavior.CRASH, Behavior.SILENT_PRIMARY, Behavior.DROP_OUTBOUND}


class Strategy(enum.Enum):
    NO_USIG = "no_usig"
    COMPROMISED_USIG = "compromised_usig"


@dataclass(frozen=True)
class NodeFault:
    behavior: Behavior = Behavior.CORRECT
    at: int = 0  # CRASH: simulated ms at which the node stops
    views: tuple[int, ...] = (0,)  # SILENT_PRIMARY: views in which it stays silent
    strategy: Strategy = Strategy.NO_USIG  # EQUIVOCATE
    prob: float = 0.0  # DROP_OUTBOUND


@dataclass(frozen=True)
class Partition:
    start: int
    end: int
    groups: tuple[frozenset[int], ...]

    def separates(self, a: int, b: int, now: int) -> bool:
        if not self.start <= now < self.end:
            return False
        ga = next((i for i, g in enumerate(self.groups) if a in g), None)
        gb = next((i for i, g in enumerate(self.groups) if b in g), None)
        # nodes not listed form one extra group together
        return ga != gb


@dataclass(frozen=True)
class FaultScript:
    nodes: dict = field(default_factory=dict)  # replica id -> NodeFault
    partitions: tuple[Partition, ...] = ()
    drop_prob: float = 0.0
    dup_prob: float = 0.0
    jitter: int = 0
    gst: int = 0
    pre_gst_delay: int = 0  # extra random delay bound before GST

    def behavior(self, node: int) -> NodeFault:
        return self.nodes.get(node, NodeFault())

    def faulty(self) -> list[int]:
        return sorted(r for r, nf in self.nodes.items() if nf.behavior is not Behavior.CORRECT)

    def check_budget(self, f: int) -> None:
        if len(self.faulty()) > f:
            raise ValueError(f"fault script marks {len(self.faulty())} replicas faulty; f = {f}")

    def honest_logic(self, replicas: int) -> list[int]:
        return [r for r in range(replicas) if self.behavior(r).behavior in HONEST_LOGIC]


# ---------------------------------------------------------------------------
# Byzantine replica variants (MinBFT adversaries)

class ReproposingMinbft(MinbftReplica):
    """Faulty primary that orders every fresh batch a second time under a new UI."""

    def _send_prepare(self, seq: int, batch: Batch) -> None:
        super()._send_prepare(seq, batch)
        if batch.commands and seq > self.adopted_tip:
            super()._send_prepare(seq + 1, Batch(batch.commands[::-1]))


class TruncatingMinbft(MinbftReplica):
    """Sends view changes that hide the newest entry of its log."""

    def _build_view_change(self, new_view: int) -> ViewChange:
        full = super()._build_view_change(new_view)
        if not full.log:
            return full
        log = full.log[:-1]
        draft = ViewChange(self.id, new_view, log, full.certificates, full.blocks, full.batches,
                           UsigCertificate(self.id, 0, b"", b""))
        ui = self.usig.create_ui(view_change_statement(draft))
        return ViewChange(self.id, new_view, log, full.certificates, full.blocks, full.batches, ui)


# ---------------------------------------------------------------------------
# output filters wrapped around a node by the simulator

class Equivocator:
    """Primary that shows half of the other replicas a shadow proposal stream.

    With ``NO_USIG`` the shadow messages reuse the genuine certificate, so
    they fail verification. With ``COMPROMISED_USIG`` the node's trusted
    counter is subverted and each shadow message gets a valid certificate
    repeating the genuine counter.
    """

    def __init__(self, replica, n: int, strategy: Strategy):
        self.replica = replica
        others = [r for r in range(n) if r != replica.id]
        self.shadow_group = set(others[len(others) // 2:])
        self.strategy = strategy
        self.shadow: dict[bytes, bytes] = {}  # genuine block digest -> shadow digest
        if strategy is Strategy.COMPROMISED_USIG:
            replica.usig.compromise(honest_next)

    def _forge(self, statement: bytes, genuine: UsigCertificate) -> UsigCertificate:
        if self.strategy is Strategy.COMPROMISED_USIG:
            return self.replica.usig.forge(statement, genuine.counter)
        return genuine

    def _shadow_commands(self, cmds: tuple[Command, ...], tag: int) -> tuple[Command, ...]:
        marker = Command(-1 - self.replica.id, tag, b"shadow")
        return tuple(reversed(cmds)) + (marker,)

    def _shadow_msg(self, msg):
        if isinstance(msg, Propose):
            b = msg.block
            parent = self.shadow.get(b.parent_digest, b.parent_digest) if b.parent_digest else None
            block = Block(b.height, parent, self._shadow_commands(b.commands, msg.ui.counter),
                          b.instance)
            self.shadow[b.digest] = block.digest
            ui = self._forge(propose_statement(msg.view, msg.sender, block), msg.ui)
            return Propose(msg.view, msg.sender, block, None, ui)
        if isinstance(msg, Prepare):
            batch = Batch(self._shadow_commands(msg.batch.commands, msg.ui.counter))
            ui = self._forge(prepare_statement(msg.view, msg.sender, msg.seq, batch.digest), msg.ui)
            return Prepare(msg.view, msg.sender, msg.seq, batch, ui)
        return None

    def filter(self, actions: list, n: int) -> list:
        out = []
        for act in actions:
            if isinstance(act, Send) and act.dest == BROADCAST:
                shadow = self._shadow_msg(act.msg)
                if shadow is not None:
                    for r in range(n):
                        out.append(Send(r, shadow if r in self.shadow_group else act.msg))
                    continue
            out.append(act)
        return out


def silent_now(replica, fault: NodeFault) -> bool:
    return (fault.behavior is Behavior.SILENT_PRIMARY and replica.view in fault.views
            and replica.params.primary(replica.view) == replica.id)


def drops(fault: NodeFault, rng: random.Random) -> bool:
    return fault.behavior is Behavior.DROP_OUTBOUND and rng.random() < fault.prob


def replica_class(protocol_family: str, fault: NodeFault) -> Optional[type]:
    """Subclass implementing an in-protocol adversary, or None for the default."""
    if protocol_family == "minbft":
        if fault.behavior is Behavior.REPROPOSE:
            return ReproposingMinbft
        if fault.behavior is Behavior.TRUNCATE_LOG:
            return TruncatingMinbft
    return None
