"""Flexible MinBFT replica: Prepare/Commit ordering with f+1 commit quorums.

The primary assigns each batch a sequence number and attests the Prepare
with its USIG. Replicas process the primary's messages strictly in counter
order and answer with an attested Commit. A batch executes once f+1 distinct
endorsements (the Prepare counts for the primary) are in and every lower
sequence number has executed. View changes need N - f ViewChange messages.
"""

from __future__ import annotations

from collections import deque
from typing import Optional

from duobft.messages import (
    AdoptedEntry,
    Batch,
    Commit,
    Command,
    Model,
    NewView,
    Prepare,
    Stmt,
    ViewChange,
    commit_statement,
    parse_statement,
    prepare_statement,
)
from duobft.replica import ReplicaBase
from duobft.usig import UsigCertificate, verify_ui

EMPTY_BATCH = Batch(())


class MinbftReplica(ReplicaBase):
    protocol_models = (Model.HYBRID,)

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.batches: dict[bytes, Batch] = {EMPTY_BATCH.digest: EMPTY_BATCH}
        self.entries: dict[int, tuple[Batch, UsigCertificate]] = {}
        self.accepted_seq = 0
        self.adopted: dict[int, bytes] = {}  # seq -> digest fixed by the NewView
        self.adopted_tip = 0
        self.exec_seq = 0
        self.executed: dict[int, bytes] = {}
        self.endorsed: dict[tuple[int, int], dict[int, bytes]] = {}
        self.primary_next = 1
        self.primary_buffer: dict[int, tuple[int, Batch, UsigCertificate]] = {}
        self.processed: dict[int, bytes] = {}
        self.seq_next = 1
        self.queue: deque[Command] = deque()
        self.in_flight: set[tuple[int, int]] = set()
        self.future: dict[int, list] = {}
        self.halted = False
        self._preparing = False

    # ------------------------------------------------------------- primary

    def _new_command(self, cmd: Command) -> None:
        if self.is_primary and cmd.id not in self.in_flight:
            self.queue.append(cmd)
            self._maybe_prepare()

    def _maybe_prepare(self) -> None:
        if self._preparing:
            return
        self._preparing = True
        try:
            self._prepare_loop()
        finally:
            self._preparing = False

    def _prepare_loop(self) -> None:
        while self.is_primary:
            s = self.seq_next
            if s <= self.adopted_tip:
                batch = self.batches[self.adopted[s]]
            else:
                if s - 1 - self.exec_seq >= self.config.pipeline:
                    return
                cmds = []
                while self.queue and len(cmds) < self.config.batch_size:
                    cmd = self.queue.popleft()
                    if cmd.id in self.in_flight or cmd.id not in self.pending:
                        continue
                    cmds.append(cmd)
                    self.in_flight.add(cmd.id)
                if not cmds:
                    return
                batch = Batch(tuple(cmds))
            self._send_prepare(s, batch)

    def _send_prepare(self, seq: int, batch: Batch) -> None:
        ui = self._attest(prepare_statement(self.view, self.id, seq, batch.digest))
        self.batches[batch.digest] = batch
        self.seq_next = seq + 1
        self._broadcast(Prepare(self.view, self.id, seq, batch, ui))
        self._take_prepare(seq, batch, ui)

    # ------------------------------------------------------------- replicas

    def _defer(self, src: int, msg) -> None:
        self.future.setdefault(msg.view, []).append((src, msg))

    def _on_Prepare(self, src: int, msg: Prepare) -> None:
        if msg.view < self.view:
            return
        if msg.view > self.view or self.in_view_change:
            self._defer(src, msg)
            return
        if msg.sender != self.primary or msg.sender == self.id:
            return
        stmt = prepare_statement(msg.view, msg.sender, msg.seq, msg.batch.digest)
        if msg.ui.replica != msg.sender or not verify_ui(self.keys[msg.sender], stmt, msg.ui):
            return
        self._ordered(msg.seq, msg.batch, msg.ui, stmt)

    def _on_Commit(self, src: int, msg: Commit) -> None:
        if msg.view < self.view:
            return
        if msg.view > self.view or self.in_view_change:
            self._defer(src, msg)
            return
        if msg.primary != self.primary:
            return
        key = self.keys.get(msg.sender)
        if key is None or msg.ui.replica != msg.sender:
            return
        cstmt = commit_statement(msg.view, msg.sender, msg.primary, msg.seq, msg.batch.digest,
                                 msg.primary_ui)
        pstmt = prepare_statement(msg.view, msg.primary, msg.seq, msg.batch.digest)
        if not verify_ui(key, cstmt, msg.ui):
            return
        if msg.primary_ui.replica != msg.primary or not verify_ui(self.keys[msg.primary], pstmt,
                                                                   msg.primary_ui):
            return
        if msg.primary != self.id:
            # a Commit carries the Prepare it answers, so a lost Prepare is recoverable
            self._ordered(msg.seq, msg.batch, msg.primary_ui, pstmt)
        self._endorse(msg.view, msg.seq, msg.sender, msg.batch.digest)

    def _ordered(self, seq: int, batch: Batch, ui: UsigCertificate, stmt: bytes) -> None:
        counter = ui.counter
        if counter < self.primary_next:
            seen = self.processed.get(counter)
            if seen is not None and seen != stmt:
                self._evidence("conflicting prepares", counter=counter)
            return
        if counter > self.primary_next:
            self.primary_buffer.setdefault(counter, (seq, batch, ui))
            return
        self._accept(seq, batch, ui, stmt)
        while self.primary_next in self.primary_buffer and not self.in_view_change:
            s, b, u = self.primary_buffer.pop(self.primary_next)
            self._accept(s, b, u, prepare_statement(self.view, self.primary, s, b.digest))

    def _accept(self, seq: int, batch: Batch, ui: UsigCertificate, stmt: bytes) -> None:
        self.processed[ui.counter] = stmt
        self.primary_next = ui.counter + 1
        if seq != self.accepted_seq + 1:
            self._evidence("sequence gap", seq=seq)
            return
        if seq <= self.adopted_tip and self.adopted[seq] != batch.digest:
            self._evidence("prepare contradicts new view", seq=seq)
            return
        self.batches[batch.digest] = batch
        self._take_prepare(seq, batch, ui)
        if self.suspect_view != self.view:
            cstmt = commit_statement(self.view, self.id, self.primary, seq, batch.digest, ui)
            mine = self._attest(cstmt)
            self._broadcast(Commit(self.view, self.id, self.primary, seq, batch, ui, mine))

    def _take_prepare(self, seq: int, batch: Batch, ui: UsigCertificate) -> None:
        self.entries[seq] = (batch, ui)
        self.accepted_seq = seq
        self._endorse(self.view, seq, self.primary, batch.digest)

    def _endorse(self, view: int, seq: int, replica: int, digest: bytes) -> None:
        self.endorsed.setdefault((view, seq), {}).setdefault(replica, digest)
        self._try_execute()

    def _try_execute(self) -> None:
        while not self.halted:
            s = self.exec_seq + 1
            entry = self.entries.get(s)
            if entry is None:
                break
            batch = entry[0]
            votes = self.endorsed.get((self.view, s), {})
            if sum(1 for d in votes.values() if d == batch.digest) < self.params.commit_hybrid:
                break
            self.exec_seq = s
            self.executed[s] = batch.digest
            self._note("commit", model=Model.HYBRID.name, lane=0, height=s,
                       digest=batch.digest.hex(), view=self.view, n=len(batch.commands))
            self._executed(Model.HYBRID, batch.commands)
        # executing frees pipeline room
        self._maybe_prepare()

    # ---------------------------------------------------------- view change

    def _leave_view(self) -> None:
        self.primary_buffer.clear()
        self.queue.clear()

    def _view_change_evidence(self):
        wanted = []
        for entry in self.log:
            if entry.statement[0] in (Stmt.PREPARE, Stmt.COMMIT):
                wanted.append(parse_statement(entry.statement).digest)
        batches = {d: self.batches[d] for d in wanted}
        return (), (), tuple(batches[d] for d in sorted(batches))

    def _evidence_problem(self, vc: ViewChange) -> Optional[str]:
        if vc.certificates or vc.blocks:
            return "unexpected evidence"
        pool = {b.digest for b in vc.batches}
        for st, _ in self.statements(vc):
            if st.kind in (Stmt.PREPARE, Stmt.COMMIT):
                if st.digest not in pool:
                    return "missing batch"
            if st.kind is Stmt.PREPARE and st.sender != self.params.primary(st.view):
                return "prepare outside own view"
            if st.kind is Stmt.COMMIT:
                pui = st.primary_ui()
                pstmt = prepare_statement(st.view, st.primary, st.height, st.digest)
                if (st.primary != self.params.primary(st.view) or pui.replica != st.primary
                        or not verify_ui(self.keys[st.primary], pstmt, pui)):
                    return "bad embedded prepare"
        return None

    def _compute_adopted(self, vcs: tuple[ViewChange, ...]) -> tuple[AdoptedEntry, ...]:
        best: dict[int, tuple[int, bytes]] = {}
        for vc in vcs:
            for st, _ in self.statements(vc):
                if st.kind not in (Stmt.PREPARE, Stmt.COMMIT):
                    continue
                seq, view, digest = st.height, st.view, st.digest
                cur = best.get(seq)
                if cur is None or view > cur[0] or (view == cur[0] and digest < cur[1]):
                    best[seq] = (view, digest)
        top = max(best, default=0)
        return tuple(AdoptedEntry(s, best[s][0], best[s][1]) if s in best
                     else AdoptedEntry(s, -1, EMPTY_BATCH.digest)
                     for s in range(1, top + 1))

    def _install(self, nv: NewView) -> None:
        for vc in nv.view_changes:
            for b in vc.batches:
                self.batches[b.digest] = b
        self.primary_next = nv.ui.counter + 1
        self.primary_buffer.clear()
        self.processed = {}
        self.adopted = {e.major: e.digest for e in nv.adopted}
        self.adopted_tip = len(nv.adopted)
        for s, digest in self.executed.items():
            if s in self.adopted and self.adopted[s] != digest and not self.halted:
                self.halted = True
                self._note("conflict", model=Model.HYBRID.name, lane=0, height=s)
        self.entries = {}
        self.accepted_seq = 0
        self.seq_next = 1
        self.in_flight = {c.id for d in self.adopted.values() for c in self.batches[d].commands}
        if self.is_primary:
            self.queue = deque(c for c in sorted(self.pending.values(), key=lambda c: c.id)
                               if c.id not in self.in_flight)
            self._maybe_prepare()
        for src, msg in self.future.pop(self.view, []):
            getattr(self, "_on_" + type(msg).__name__)(src, msg)
        for v in [v for v in self.future if v < self.view]:
            del self.future[v]
