"""DuoBFT replica: one chain per lane, two certificate flavors, two ledgers.

A block is hybrid-committed once f+1 attested votes for it exist and
BFT-committed once 2f+1 votes exist for it and for a successor that extends
it, both in the same view. The primary's Propose counts as its own vote.
With ``instances > 1`` the replica runs that many lanes under one primary and
executes in round barriers (see :mod:`duobft.multichain`).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from duobft.messages import (
    Block,
    CertBroadcast,
    CertVote,
    Command,
    Model,
    NewView,
    AdoptedEntry,
    Propose,
    QuorumCertificate,
    Stmt,
    ViewChange,
    Vote,
    propose_statement,
    vote_statement,
)
from duobft.multichain import Dispatcher, RoundBarrier
from duobft.quorum import try_assemble, validate_certificate
from duobft.replica import CommPattern, Pacing, ReplicaBase, Send
from duobft.usig import UsigCertificate, verify_ui

MODELS = (Model.HYBRID, Model.BFT)


@dataclass
class Lane:
    instance: int
    chain: dict[int, Block] = field(default_factory=dict)
    start: int = 1  # first height (re)proposed in the current view
    adopted_tip: int = 0  # heights start..adopted_tip are fixed by the NewView
    accepted: int = 0
    voted: int = 0
    proposed: int = 0
    proposer_ui: dict[int, UsigCertificate] = field(default_factory=dict)
    queue: deque = field(default_factory=deque)
    frontier: dict[Model, int] = field(default_factory=lambda: {m: 0 for m in MODELS})
    committed: dict[Model, dict[int, Block]] = field(
        default_factory=lambda: {m: {} for m in MODELS})

    def reset_view(self, start: int, tip: int) -> None:
        self.start = start
        self.adopted_tip = tip
        self.accepted = self.voted = self.proposed = start - 1
        self.proposer_ui = {}
        self.queue.clear()


class DuobftReplica(ReplicaBase):
    protocol_models = MODELS

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        m = self.config.instances
        self.lanes = [Lane(i) for i in range(m)]
        self.dispatcher = Dispatcher(m)
        self.barriers = {model: RoundBarrier(m) for model in MODELS}
        self.halted: set[Model] = set()
        self.blocks: dict[bytes, Block] = {}
        self.votes: dict[tuple[int, int, bytes], dict[int, CertVote]] = {}
        self.vote_seen: dict[tuple[int, int, int, int], bytes] = {}
        self.certs: dict[tuple[int, int, bytes], dict[Model, QuorumCertificate]] = {}
        self.best_bft: dict[int, QuorumCertificate] = {}
        self.best_any: dict[int, QuorumCertificate] = {}
        self.primary_next = 1
        self.primary_buffer: dict[int, Propose] = {}
        self.processed: dict[int, bytes] = {}  # primary counter -> propose statement
        self.future: dict[int, list] = {}
        self.in_flight: set[tuple[int, int]] = set()  # command ids in this view's blocks

    # ---------------------------------------------------------- properties

    def frontier(self, model: Model, lane: int = 0) -> int:
        return self.lanes[lane].frontier[model]

    def _has_cert(self, view: int, instance: int, digest: Optional[bytes], flavor: Model) -> bool:
        got = self.certs.get((view, instance, digest))
        if not got:
            return False
        return Model.BFT in got if flavor is Model.BFT else True

    def _best_cert(self, view: int, instance: int, digest: bytes) -> Optional[QuorumCertificate]:
        got = self.certs.get((view, instance, digest), {})
        return got.get(Model.BFT) or got.get(Model.HYBRID)

    def _defer(self, src: int, msg) -> None:
        pending = self.future.setdefault(msg.view, [])
        if len(pending) < 100_000:
            pending.append((src, msg))

    # ------------------------------------------------------------ proposals

    def _new_command(self, cmd: Command) -> None:
        if self.is_primary and cmd.id not in self.in_flight:
            lane = self.lanes[self.dispatcher.dispatch(cmd)]
            if cmd not in lane.queue:
                lane.queue.append(cmd)
            self._maybe_propose()

    def _maybe_propose(self) -> None:
        if not self.is_primary:
            return
        flavor = Model.BFT if self.config.pacing is Pacing.BFT_QC else Model.HYBRID
        progressed = True
        while progressed:
            progressed = False
            top = max(lane.proposed for lane in self.lanes)
            for lane in self.lanes:
                if self._propose_next(lane, flavor, top):
                    progressed = True

    def _propose_next(self, lane: Lane, flavor: Model, top: int) -> bool:
        h = lane.proposed + 1
        parent = lane.chain.get(h - 1)
        if h > lane.start and not self._has_cert(self.view, lane.instance, parent.digest, flavor):
            return False
        if h <= lane.adopted_tip:
            block = lane.chain[h]
        else:
            last_full = parent is not None and h - 1 >= lane.start and bool(parent.commands)
            if not (lane.queue or last_full or top > lane.proposed):
                return False
            cmds = []
            while lane.queue and len(cmds) < self.config.batch_size:
                cmd = lane.queue.popleft()
                if cmd.id in self.in_flight or cmd.id not in self.pending:
                    continue
                cmds.append(cmd)
                self.in_flight.add(cmd.id)
            block = Block(h, parent.digest if parent else None, tuple(cmds), lane.instance)
        justify = self._best_cert(self.view, lane.instance, parent.digest) if h > lane.start else None
        ui = self._attest(propose_statement(self.view, self.id, block))
        self.blocks[block.digest] = block
        lane.chain[h] = block
        lane.proposed = lane.accepted = h
        lane.proposer_ui[h] = ui
        self._broadcast(Propose(self.view, self.id, block, justify, ui))
        self._add_vote(self.view, lane.instance, h, block.digest, CertVote(self.id, ui))
        return True

    def _on_Propose(self, src: int, msg: Propose) -> None:
        if msg.view < self.view:
            return
        if msg.view > self.view or self.in_view_change:
            self._defer(src, msg)
            return
        if msg.sender != self.primary or msg.sender == self.id:
            return
        key = self.keys[msg.sender]
        stmt = propose_statement(msg.view, msg.sender, msg.block)
        if msg.ui.replica != msg.sender or not verify_ui(key, stmt, msg.ui):
            return
        counter = msg.ui.counter
        if counter < self.primary_next:
            seen = self.processed.get(counter)
            if seen is not None and seen != stmt:
                self._evidence("conflicting proposals", counter=counter)
            return
        if counter > self.primary_next:
            self.primary_buffer.setdefault(counter, msg)
            return
        self._accept(msg, stmt)
        while self.primary_next in self.primary_buffer and not self.in_view_change:
            nxt = self.primary_buffer.pop(self.primary_next)
            self._accept(nxt, propose_statement(nxt.view, nxt.sender, nxt.block))

    def _accept(self, msg: Propose, stmt: bytes) -> None:
        self.processed[msg.ui.counter] = stmt
        self.primary_next = msg.ui.counter + 1
        block = msg.block
        if not 0 <= block.instance < len(self.lanes):
            self._evidence("bad lane")
            return
        lane = self.lanes[block.instance]
        h = block.height
        if h != lane.accepted + 1:
            self._evidence("height out of sequence", height=h)
            return
        if h <= lane.adopted_tip:
            if lane.chain[h].digest != block.digest:
                self._evidence("proposal contradicts new view", height=h)
                return
        else:
            parent = lane.chain.get(h - 1)
            want = parent.digest if parent is not None else None
            if block.parent_digest != want or (h == 1) != (block.parent_digest is None):
                self._evidence("proposal does not extend chain", height=h)
                return
        self.blocks[block.digest] = block
        lane.chain[h] = block
        lane.accepted = h
        lane.proposer_ui[h] = msg.ui
        if msg.justify is not None:
            self._take_cert(msg.justify)
        self._add_vote(self.view, lane.instance, h, block.digest, CertVote(msg.sender, msg.ui))
        self._check_commits(lane, h)
        self._check_commits(lane, h - 1)
        self._try_vote(lane)

    # ---------------------------------------------------------------- votes

    def _try_vote(self, lane: Lane) -> None:
        if self.in_view_change or self.suspect_view == self.view or self.primary == self.id:
            return
        while lane.voted < lane.accepted:
            h = lane.voted + 1
            block = lane.chain[h]
            if h > lane.start and not self._has_cert(self.view, lane.instance,
                                                     block.parent_digest, Model.BFT):
                return
            ui = self._attest(vote_statement(self.view, self.id, lane.instance, h, block.digest))
            vote = Vote(self.view, self.id, block.digest, h, lane.instance,
                        lane.proposer_ui[h], ui)
            lane.voted = h
            if self.config.comm is CommPattern.LINEAR:
                self._emit(Send(self.primary, vote))
            else:
                self._broadcast(vote)

    def _on_Vote(self, src: int, msg: Vote) -> None:
        if msg.view < self.view:
            return
        if msg.view > self.view or self.in_view_change:
            self._defer(src, msg)
            return
        if self.config.comm is CommPattern.LINEAR and self.primary != self.id:
            return
        if not 0 <= msg.instance < len(self.lanes):
            return
        key = self.keys.get(msg.sender)
        stmt = vote_statement(msg.view, msg.sender, msg.instance, msg.height, msg.block_digest)
        if key is None or msg.voter_ui.replica != msg.sender or not verify_ui(key, stmt, msg.voter_ui):
            return
        slot = (msg.view, msg.instance, msg.height, msg.sender)
        seen = self.vote_seen.get(slot)
        if seen is not None:
            if seen != msg.block_digest:
                self._note("evidence", reason="conflicting votes", view=self.view, voter=msg.sender)
            return
        self.vote_seen[slot] = msg.block_digest
        lane = self.lanes[msg.instance]
        mine = lane.chain.get(msg.height)
        if (mine is not None and msg.height <= lane.accepted and mine.digest != msg.block_digest
                and self._proposed_by_primary(msg)):
            self._evidence("conflicting block seen in vote", height=msg.height)
        self._add_vote(msg.view, msg.instance, msg.height, msg.block_digest,
                       CertVote(msg.sender, msg.voter_ui))

    def _proposed_by_primary(self, msg: Vote) -> bool:
        primary = self.params.primary(msg.view)
        stmt = propose_statement(msg.view, primary,
                                 _Header(msg.height, msg.instance, msg.block_digest))
        ui = msg.proposer_ui
        return ui.replica == primary and verify_ui(self.keys[primary], stmt, ui)

    def _add_vote(self, view: int, instance: int, height: int, digest: bytes,
                  vote: CertVote) -> None:
        bucket = self.votes.setdefault((view, instance, digest), {})
        if vote.replica in bucket:
            return
        bucket[vote.replica] = vote
        for flavor in MODELS:
            if len(bucket) == self.params.threshold(flavor):
                cert = try_assemble(bucket.values(), flavor, self.params, self.keys,
                                    block_digest=digest, height=height, view=view,
                                    instance=instance)
                if cert is not None:
                    self._add_cert(cert)

    # --------------------------------------------------------- certificates

    def _take_cert(self, cert: QuorumCertificate) -> None:
        """Adopt a certificate received from someone else after checking it."""
        if not 0 <= cert.instance < len(self.lanes):
            return
        if cert.flavor in self.certs.get((cert.view, cert.instance, cert.block_digest), {}):
            return
        if validate_certificate(cert, self.params, self.keys):
            self._add_cert(cert)

    def _add_cert(self, cert: QuorumCertificate) -> None:
        held = self.certs.setdefault((cert.view, cert.instance, cert.block_digest), {})
        if cert.flavor in held:
            return
        held[cert.flavor] = cert
        rank = (cert.view, cert.height)
        if cert.flavor is Model.BFT:
            best = self.best_bft.get(cert.instance)
            if best is None or rank > (best.view, best.height):
                self.best_bft[cert.instance] = cert
        best = self.best_any.get(cert.instance)
        if best is None or rank > (best.view, best.height):
            self.best_any[cert.instance] = cert
        if cert.view != self.view or self.in_view_change:
            return
        if self.config.comm is CommPattern.LINEAR and self.primary == self.id:
            self._broadcast(CertBroadcast(self.view, self.id, cert))
        lane = self.lanes[cert.instance]
        self._check_commits(lane, cert.height)
        self._try_vote(lane)
        self._maybe_propose()

    def _on_CertBroadcast(self, src: int, msg: CertBroadcast) -> None:
        if msg.view < self.view:
            return
        if msg.view > self.view or self.in_view_change:
            self._defer(src, msg)
            return
        if msg.sender != self.primary or msg.sender == self.id:
            return
        if msg.certificate.view != msg.view:
            return
        self._take_cert(msg.certificate)

    # -------------------------------------------------------------- commits

    def _check_commits(self, lane: Lane, h: int) -> None:
        block = lane.chain.get(h)
        if block is None or h > lane.accepted:
            return
        view, inst = self.view, lane.instance
        if self._has_cert(view, inst, block.digest, Model.HYBRID):
            self._commit_through(lane, Model.HYBRID, h)
        if not self._has_cert(view, inst, block.digest, Model.BFT):
            return
        for k in (h - 1, h):
            lower, upper = lane.chain.get(k), lane.chain.get(k + 1)
            if (lower is None or upper is None or k < 1 or k + 1 > lane.accepted
                    or upper.parent_digest != lower.digest):
                continue
            if (self._has_cert(view, inst, lower.digest, Model.BFT)
                    and self._has_cert(view, inst, upper.digest, Model.BFT)):
                self._commit_through(lane, Model.BFT, k)

    def _commit_through(self, lane: Lane, model: Model, h: int) -> None:
        if model in self.halted or h <= lane.frontier[model]:
            return
        for k in range(lane.frontier[model] + 1, h + 1):
            block = lane.chain[k]
            lane.committed[model][k] = block
            self._note("commit", model=model.name, lane=lane.instance, height=k,
                       digest=block.digest.hex(), view=self.view, n=len(block.commands))
        lane.frontier[model] = h
        barrier = self.barriers[model]
        barrier.committed(lane.instance, h)
        for r in barrier.advance_rounds():
            for ln in self.lanes:
                self._executed(model, ln.committed[model][r].commands)

    # ---------------------------------------------------------- view change

    def _leave_view(self) -> None:
        self.primary_buffer.clear()
        for lane in self.lanes:
            lane.queue.clear()

    def _view_change_evidence(self):
        certs = []
        for i in range(len(self.lanes)):
            for cert in (self.best_bft.get(i), self.best_any.get(i)):
                if cert is not None and cert.block_digest in self.blocks and cert not in certs:
                    certs.append(cert)
        wanted = {c.block_digest for c in certs}
        for entry in self.log:
            if entry.statement[0] in (Stmt.PROPOSE, Stmt.VOTE):
                wanted.add(entry.statement[-32:])
        closure: dict[bytes, Block] = {}
        for digest in wanted:
            while digest is not None and digest not in closure:
                block = self.blocks[digest]
                closure[digest] = block
                digest = block.parent_digest
        blocks = sorted(closure.values(), key=lambda b: (b.instance, b.height, b.digest))
        return tuple(certs), tuple(blocks), ()

    def _evidence_problem(self, vc: ViewChange) -> Optional[str]:
        pool = {b.digest: b for b in vc.blocks}
        for block in vc.blocks:
            if not 0 <= block.instance < len(self.lanes) or block.height < 1:
                return "bad block"
            if block.height == 1:
                if block.parent_digest is not None:
                    return "bad block"
                continue
            parent = pool.get(block.parent_digest)
            if parent is None or parent.height != block.height - 1 or parent.instance != block.instance:
                return "missing ancestor"
        for st, _ in self.statements(vc):
            if st.kind in (Stmt.PROPOSE, Stmt.VOTE):
                block = pool.get(st.digest)
                if block is None or block.height != st.height or block.instance != st.instance:
                    return "missing voted block"
        for cert in vc.certificates:
            block = pool.get(cert.block_digest)
            if block is None or block.height != cert.height or block.instance != cert.instance:
                return "missing certified block"
            if not validate_certificate(cert, self.params, self.keys):
                return "bad certificate"
        return None

    def _compute_adopted(self, vcs: tuple[ViewChange, ...]) -> tuple[AdoptedEntry, ...]:
        pool: dict[bytes, Block] = {}
        for vc in vcs:
            for b in vc.blocks:
                pool[b.digest] = b

        def ancestor(digest: bytes, height: int) -> Optional[bytes]:
            block = pool[digest]
            while block.height > height:
                block = pool[block.parent_digest]
            return block.digest

        entries: list[AdoptedEntry] = []
        for inst in range(len(self.lanes)):
            lock = None
            candidates = set()
            for vc in vcs:
                for cert in vc.certificates:
                    if cert.instance != inst:
                        continue
                    candidates.add((cert.view, cert.height, cert.block_digest))
                    rank = (cert.view, cert.height, cert.block_digest)
                    if cert.flavor is Model.BFT and (lock is None or rank > lock):
                        lock = rank
                for st, _ in self.statements(vc):
                    if st.kind in (Stmt.PROPOSE, Stmt.VOTE) and st.instance == inst:
                        candidates.add((st.view, st.height, st.digest))
            if lock is not None:
                lv, lh, ld = lock
                candidates = {c for c in candidates
                              if c[0] >= lv and c[1] >= lh and ancestor(c[2], lh) == ld}
                candidates.add(lock)
            if not candidates:
                continue
            best_view, best_height = max((c[0], c[1]) for c in candidates)
            tip = min(c[2] for c in candidates if (c[0], c[1]) == (best_view, best_height))
            start = lock[1] if lock is not None else 1
            run = []
            digest = tip
            while digest is not None and pool[digest].height >= start:
                run.append(AdoptedEntry(inst, pool[digest].height, digest))
                digest = pool[digest].parent_digest
            entries.extend(reversed(run))
        return tuple(entries)

    def _install(self, nv: NewView) -> None:
        pool: dict[bytes, Block] = {}
        for vc in nv.view_changes:
            for b in vc.blocks:
                pool[b.digest] = b
        self.blocks.update(pool)
        self.primary_next = nv.ui.counter + 1
        self.primary_buffer.clear()
        self.processed = {}
        self.in_flight = set()
        by_lane: dict[int, list[AdoptedEntry]] = {}
        for e in nv.adopted:
            by_lane.setdefault(e.major, []).append(e)
        for lane in self.lanes:
            run = by_lane.get(lane.instance, [])
            chain: dict[int, Block] = {}
            if run:
                digest = run[-1].digest
                while digest is not None:
                    block = self.blocks[digest]
                    chain[block.height] = block
                    digest = block.parent_digest
                lane.reset_view(run[0].minor, run[-1].minor)
            else:
                lane.reset_view(1, 0)
            for model in MODELS:
                for k, block in lane.committed[model].items():
                    other = chain.get(k)
                    if other is not None and other.digest != block.digest and model not in self.halted:
                        self.halted.add(model)
                        self._note("conflict", model=model.name, lane=lane.instance, height=k)
            lane.chain = chain
            for h in range(lane.start, lane.adopted_tip + 1):
                self.in_flight.update(c.id for c in chain[h].commands)
        if self.is_primary:
            for cmd in sorted(self.pending.values(), key=lambda c: c.id):
                if cmd.id not in self.in_flight:
                    self.lanes[self.dispatcher.dispatch(cmd)].queue.append(cmd)
            self._maybe_propose()
        for src, msg in self.future.pop(self.view, []):
            self.handle_inner(src, msg)
        for v in [v for v in self.future if v < self.view]:
            del self.future[v]

    def handle_inner(self, src: int, msg) -> None:
        getattr(self, "_on_" + type(msg).__name__)(src, msg)


@dataclass(frozen=True)
class _Header:
    """Just enough of a block to rebuild a Propose statement from a Vote."""

    height: int
    instance: int
    digest: bytes
