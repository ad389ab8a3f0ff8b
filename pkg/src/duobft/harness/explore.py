"""Exhaustive interleaving search over a tiny abstract model of one view.

The model is written independently of the replica code: four replicas,
replica 0 is the primary, and the primary's proposals for heights 1 and 2 are
in flight from the start. Every reachable delivery order is enumerated
breadth-first with duplicate states removed, and each state is checked for two
correct replicas committing different blocks at the same height.

Primary behaviors:

``honest``
    one block per height, trusted counters 1 and 2.
``equivocate``
    two variants per height, each under its own trusted counter, so replicas
    that take proposals in counter order see the conflict.
``compromised``
    two variants per height sharing one counter value, which a subverted
    trusted component makes possible.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

N, F = 4, 1
PRIMARY = 0
HONEST = (1, 2, 3)
HYBRID_Q = F + 1
BFT_Q = 2 * F + 1
BEHAVIORS = ("honest", "equivocate", "compromised")


class Blk(NamedTuple):
    height: int
    name: str
    parent: str | None


class Proposal(NamedTuple):
    counter: int
    block: Blk


def proposals(behavior: str) -> list[Proposal]:
    a, b = Blk(1, "A", None), Blk(2, "B", "A")
    if behavior == "honest":
        return [Proposal(1, a), Proposal(2, b)]
    a2, b2 = Blk(1, "A'", None), Blk(2, "B'", "A'")
    if behavior == "equivocate":
        return [Proposal(1, a), Proposal(2, a2), Proposal(3, b), Proposal(4, b2)]
    if behavior == "compromised":
        return [Proposal(1, a), Proposal(1, a2), Proposal(2, b), Proposal(2, b2)]
    raise ValueError(behavior)


# message kinds in flight: ("P", dest, proposal) and ("V", dest, voter, block)

class Replica(NamedTuple):
    next_counter: int
    accepted: tuple  # block names by height (None if not yet)
    votes: tuple  # per-block vote count, capped at the BFT quorum
    hybrid: frozenset  # committed (height, name)
    bft: frozenset


@dataclass(frozen=True)
class Outcome:
    behavior: str
    states: int
    hybrid_violations: int  # reachable states with conflicting hybrid commits
    bft_violations: int


def _commits(rep: Replica, blocks: dict[str, Blk]) -> tuple[frozenset, frozenset]:
    count = dict(zip(blocks, rep.votes))
    hybrid, bft = set(rep.hybrid), set(rep.bft)
    for name, k in count.items():
        blk = blocks[name]
        if k >= HYBRID_Q:
            # a commit covers the block's ancestors
            while blk is not None:
                hybrid.add((blk.height, blk.name))
                blk = blocks.get(blk.parent) if blk.parent else None
        if k >= BFT_Q and blocks[name].parent is not None:
            parent = blocks[blocks[name].parent]
            if count.get(parent.name, 0) >= BFT_Q:
                bft.add((parent.height, parent.name))
    return frozenset(hybrid), frozenset(bft)


def _bump(votes: tuple, blocks: dict[str, Blk], name: str) -> tuple:
    i = list(blocks).index(name)
    return votes[:i] + (min(votes[i] + 1, BFT_Q),) + votes[i + 1:]


def _deliver(state, msg, blocks):
    reps, flight = state
    dest = msg[1]
    rep = reps[dest]
    out = [m for m in flight if m != msg]
    if msg[0] == "P":
        prop: Proposal = msg[2]
        if prop.counter > rep.next_counter:
            return None  # held back until earlier counters arrive
        blk = prop.block
        acc = list(rep.accepted)
        ok = acc[blk.height - 1] is None and (
            blk.height == 1 or acc[blk.height - 2] == blk.parent)
        votes = _bump(rep.votes, blocks, blk.name)  # the proposal is the primary's vote
        if ok:
            acc[blk.height - 1] = blk.name
            votes = _bump(votes, blocks, blk.name)
            out += [("V", r, dest, blk.name) for r in HONEST if r != dest]
        rep = rep._replace(next_counter=prop.counter + 1, accepted=tuple(acc), votes=votes)
        # other proposals to dest under a passed counter can only be discarded now
        out = [m for m in out if not (m[0] == "P" and m[1] == dest
                                      and m[2].counter < rep.next_counter)]
    else:
        rep = rep._replace(votes=_bump(rep.votes, blocks, msg[3]))
    hybrid, bft = _commits(rep, blocks)
    rep = rep._replace(hybrid=hybrid, bft=bft)
    reps = tuple(rep if i == dest else reps[i] for i in range(len(reps)))
    return (reps, tuple(sorted(out)))


def _conflict(reps, attr: str) -> bool:
    seen: dict[int, str] = {}
    for r in HONEST:
        for height, name in getattr(reps[r], attr):
            if seen.setdefault(height, name) != name:
                return True
    return False


def explore(behavior: str) -> Outcome:
    props = proposals(behavior)
    blocks = {p.block.name: p.block for p in props}
    empty = Replica(1, (None, None), (0,) * len(blocks), frozenset(), frozenset())
    reps = tuple(empty for _ in range(N))
    flight = tuple(sorted(("P", r, p) for r in HONEST for p in props))
    start = (reps, flight)
    seen = {start}
    queue = deque([start])
    hyb = bft = 0
    while queue:
        state = queue.popleft()
        hyb += _conflict(state[0], "hybrid")
        bft += _conflict(state[0], "bft")
        for msg in dict.fromkeys(state[1]):
            nxt = _deliver(state, msg, blocks)
            if nxt is not None and nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return Outcome(behavior, len(seen), hyb, bft)
