"""Machinery shared by the MinBFT and DuoBFT replica state machines.

A replica never touches the network or a clock. Handlers take one event and
return a list of actions for the simulator to carry out: messages to send,
timers to arm or cancel, and trace notes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from duobft.crypto import hash_bytes
from duobft.messages import (
    Batch,
    ClientReply,
    ClientRequest,
    Command,
    DecodeError,
    LogEntry,
    Model,
    NewView,
    ReqViewChange,
    Statement,
    ViewChange,
    encode,
    new_view_statement,
    parse_statement,
    view_change_statement,
)
from duobft.quorum import QuorumParams
from duobft.usig import UsigCertificate, UsigInstance, verify_ui

BROADCAST = -1
"""Send destination meaning every replica, the sender included."""


@dataclass(frozen=True)
class Send:
    dest: int
    msg: object


@dataclass(frozen=True)
class SetTimer:
    name: str
    delay: int


@dataclass(frozen=True)
class CancelTimer:
    name: str


@dataclass(frozen=True)
class Note:
    """Trace event emitted by a replica (commit, view install, evidence...)."""

    kind: str
    data: dict = field(default_factory=dict, compare=False)


class CommPattern(enum.Enum):
    QUADRATIC = "quadratic"
    LINEAR = "linear"


class Pacing(enum.Enum):
    HYBRID_QC = "hybrid_qc"
    BFT_QC = "bft_qc"


@dataclass(frozen=True)
class ReplicaConfig:
    batch_size: int = 200
    base_timeout: int = 1000
    max_backoff: int = 6
    comm: CommPattern = CommPattern.QUADRATIC
    pacing: Pacing = Pacing.BFT_QC
    instances: int = 1
    pipeline: int = 4  # MinBFT: prepared-but-unexecuted batches the primary allows


class Ledger:
    """Replicated state for one fault model: a hash chain over executed commands."""

    def __init__(self) -> None:
        self.state = bytes(32)
        self.v_req: dict[int, int] = {}
        self.results: dict[int, bytes] = {}
        self.executed: list[tuple[int, int]] = []

    def execute(self, command: Command) -> tuple[bool, bytes]:
        """Apply ``command`` unless its client already saw an equal or later one.

        Returns (applied, result digest); duplicates return the cached result.
        """
        if command.sequence <= self.v_req.get(command.client, 0):
            return False, self.results.get(command.client, b"")
        self.state = hash_bytes(self.state + encode(command))
        self.v_req[command.client] = command.sequence
        self.results[command.client] = self.state
        self.executed.append(command.id)
        return True, self.state


class ReplicaBase:
    """View bookkeeping, USIG log and view-change triggers common to both protocols."""

    protocol_models: tuple[Model, ...] = (Model.HYBRID,)

    def __init__(self, replica_id: int, params: QuorumParams, usig: UsigInstance,
                 usig_keys: Mapping[int, bytes], config: ReplicaConfig = ReplicaConfig()):
        self.id = replica_id
        self.params = params
        self.usig = usig
        self.keys = dict(usig_keys)
        self.config = config
        self.view = 0
        self.in_view_change = False
        self.log: list[LogEntry] = []
        self.ledgers = {m: Ledger() for m in self.protocol_models}
        self.pending: dict[tuple[int, int], Command] = {}
        self.req_vc: dict[int, set[int]] = {}
        self.vc_msgs: dict[int, dict[int, ViewChange]] = {}
        self.requested: set[int] = set()
        self.announced: set[int] = set()  # views this replica sent a NewView for
        self.backoff = 0
        self.suspect_view = -1  # stop voting in this view after evidence
        self.progress_armed = False
        self.view_changes = 0
        self._out: list = []

    # ------------------------------------------------------------------ api

    @property
    def primary(self) -> int:
        return self.params.primary(self.view)

    @property
    def is_primary(self) -> bool:
        return self.primary == self.id and not self.in_view_change

    def start(self) -> list:
        self._after()
        return self._flush()

    def handle(self, src: int, msg) -> list:
        method = getattr(self, "_on_" + type(msg).__name__, None)
        if method is not None:
            sender = getattr(msg, "sender", None)
            # authenticated point-to-point channels: nobody speaks for someone else
            if sender is None or sender == src:
                method(src, msg)
        self._after()
        return self._flush()

    def on_timer(self, name: str) -> list:
        if name == "progress":
            self.progress_armed = False
            self._progress_timeout()
        elif name == "newview":
            if self.in_view_change:
                self._request_view_change(self.view + 1, "newview-timeout")
        self._after()
        return self._flush()

    # ------------------------------------------------------------- helpers

    def _emit(self, action) -> None:
        self._out.append(action)

    def _flush(self) -> list:
        out, self._out = self._out, []
        return out

    def _broadcast(self, msg) -> None:
        self._emit(Send(BROADCAST, msg))

    def _note(self, kind: str, **data) -> None:
        self._emit(Note(kind, data))

    def _attest(self, statement: bytes) -> UsigCertificate:
        ui = self.usig.create_ui(statement)
        self.log.append(LogEntry(statement, ui))
        return ui

    def _timeout(self) -> int:
        return self.config.base_timeout << min(self.backoff, self.config.max_backoff)

    def _made_progress(self) -> None:
        self.backoff = 0
        if self.progress_armed:
            self._emit(CancelTimer("progress"))
            self.progress_armed = False

    def _after(self) -> None:
        """Keep the progress timer armed exactly while work is outstanding."""
        want = bool(self.pending) and not self.in_view_change
        if want and not self.progress_armed:
            self._emit(SetTimer("progress", self._timeout()))
            self.progress_armed = True
        elif not want and self.progress_armed:
            self._emit(CancelTimer("progress"))
            self.progress_armed = False

    def _progress_timeout(self) -> None:
        if self.pending and not self.in_view_change:
            self._request_view_change(self.view + 1, "timeout")

    def _evidence(self, reason: str, **data) -> None:
        """Conflicting attested statements or an invalid primary message."""
        self._note("evidence", reason=reason, view=self.view, **data)
        self.suspect_view = self.view
        self._request_view_change(self.view + 1, reason)

    # -------------------------------------------------------------- clients

    def _on_ClientRequest(self, src: int, msg: ClientRequest) -> None:
        cmd = msg.command
        done = 0
        for model, ledger in self.ledgers.items():
            last = ledger.v_req.get(cmd.client, 0)
            if cmd.sequence <= last:
                done += 1
                if cmd.sequence == last and cmd.response_model.wants(model):
                    self._reply(cmd, model, ledger.results[cmd.client])
        if done == len(self.ledgers):
            return
        if cmd.id not in self.pending:
            self.pending[cmd.id] = cmd
            self._new_command(cmd)
        if src == cmd.client and not self.is_primary and not self.in_view_change:
            self._emit(Send(self.primary, msg))

    def _reply(self, cmd: Command, model: Model, result: bytes) -> None:
        self._emit(Send(cmd.client, ClientReply(self.id, cmd.client, cmd.sequence, model,
                                                self.view, result)))

    def _executed(self, model: Model, commands: Iterable[Command]) -> None:
        ledger = self.ledgers[model]
        progressed = False
        for cmd in commands:
            applied, result = ledger.execute(cmd)
            if applied:
                progressed = True
                self._note("execute", model=model.name, client=cmd.client, seq=cmd.sequence)
            if cmd.response_model.wants(model) and ledger.v_req.get(cmd.client) == cmd.sequence:
                self._reply(cmd, model, result)
            if all(cmd.sequence <= lg.v_req.get(cmd.client, 0) for lg in self.ledgers.values()):
                self.pending.pop(cmd.id, None)
        if progressed:
            self._made_progress()

    # ---------------------------------------------------------- view change

    def _request_view_change(self, new_view: int, reason: str) -> None:
        if new_view in self.requested:
            return
        self.requested.add(new_view)
        self._note("req_view_change", new_view=new_view, reason=reason)
        self._broadcast(ReqViewChange(self.id, new_view - 1, new_view))

    def _on_ReqViewChange(self, src: int, msg: ReqViewChange) -> None:
        if msg.new_view != msg.old_view + 1:
            return
        votes = self.req_vc.setdefault(msg.new_view, set())
        votes.add(msg.sender)
        if msg.new_view > self.view and len(votes) >= self.params.req_view_change:
            self._note("req_threshold", new_view=msg.new_view, count=len(votes))
            self._start_view_change(msg.new_view)

    def _start_view_change(self, new_view: int) -> None:
        if new_view <= self.view:
            return
        self.view = new_view
        self.in_view_change = True
        self.backoff += 1
        self.view_changes += 1
        self._note("view_change", new_view=new_view)
        self._leave_view()
        vc = self._build_view_change(new_view)
        self._broadcast(vc)
        self._emit(SetTimer("newview", self._timeout()))
        if self.progress_armed:
            self._emit(CancelTimer("progress"))
            self.progress_armed = False

    def _build_view_change(self, new_view: int) -> ViewChange:
        certs, blocks, batches = self._view_change_evidence()
        draft = ViewChange(self.id, new_view, tuple(self.log), certs, blocks, batches,
                           UsigCertificate(self.id, 0, b"", b""))
        stmt = view_change_statement(draft)
        ui = self._attest(stmt)
        return ViewChange(self.id, new_view, draft.log, certs, blocks, batches, ui)

    def _on_ViewChange(self, src: int, msg: ViewChange) -> None:
        if msg.new_view < self.view or (msg.new_view == self.view and not self.in_view_change):
            return
        bucket = self.vc_msgs.setdefault(msg.new_view, {})
        if msg.sender in bucket:
            return
        reason = self.view_change_problem(msg)
        if reason is not None:
            self._note("vc_rejected", sender=msg.sender, new_view=msg.new_view, reason=reason)
            return
        bucket[msg.sender] = msg
        if msg.new_view > self.view and len(bucket) >= self.params.req_view_change:
            self._start_view_change(msg.new_view)
        self._maybe_new_view(msg.new_view)

    def _maybe_new_view(self, new_view: int) -> None:
        if self.params.primary(new_view) != self.id or not self.in_view_change:
            return
        if new_view != self.view:
            return
        bucket = self.vc_msgs.get(new_view, {})
        if len(bucket) < self.params.view_change or new_view in self.announced:
            return
        self.announced.add(new_view)
        chosen = tuple(bucket[r] for r in sorted(bucket)[:self.params.view_change])
        adopted = self._compute_adopted(chosen)
        draft = NewView(self.id, new_view, chosen, adopted, UsigCertificate(self.id, 0, b"", b""))
        ui = self._attest(new_view_statement(draft))
        self._broadcast(NewView(self.id, new_view, chosen, adopted, ui))

    def _on_NewView(self, src: int, msg: NewView) -> None:
        if msg.new_view < self.view or (msg.new_view == self.view and not self.in_view_change):
            return
        if msg.sender != self.params.primary(msg.new_view):
            return
        reason = self._new_view_problem(msg)
        if reason is not None:
            self._note("nv_rejected", new_view=msg.new_view, reason=reason)
            if msg.new_view >= self.view:
                self.view = max(self.view, msg.new_view)
                self.in_view_change = True
                self._request_view_change(msg.new_view + 1, "bad-newview")
            return
        if msg.new_view > self.view or not self.in_view_change:
            # skipped the view-change phase (e.g. partitioned); adopt directly
            self.view = msg.new_view
            self._leave_view()
        self.in_view_change = False
        self._emit(CancelTimer("newview"))
        self._note("view", view=msg.new_view, primary=msg.sender)
        self._install(msg)

    def _new_view_problem(self, nv: NewView) -> Optional[str]:
        key = self.keys.get(nv.sender)
        if key is None or nv.ui.replica != nv.sender:
            return "unknown sender"
        if not verify_ui(key, new_view_statement(nv), nv.ui):
            return "bad ui"
        senders = [vc.sender for vc in nv.view_changes]
        if len(set(senders)) != len(senders) or len(senders) < self.params.view_change:
            return "short view-change certificate"
        for vc in nv.view_changes:
            if vc.new_view != nv.new_view:
                return "mixed views"
            problem = self.view_change_problem(vc)
            if problem is not None:
                return f"view change from {vc.sender}: {problem}"
        if self._compute_adopted(nv.view_changes) != nv.adopted:
            return "adopted sequence mismatch"
        return None

    def view_change_problem(self, vc: ViewChange) -> Optional[str]:
        """Why ``vc`` is unacceptable, or None. Hole detection lives here."""
        key = self.keys.get(vc.sender)
        if key is None or vc.ui.replica != vc.sender:
            return "unknown sender"
        if not verify_ui(key, view_change_statement(vc), vc.ui):
            return "bad ui"
        # the log must be every attested statement up to the ViewChange itself
        if vc.ui.counter != len(vc.log) + 1:
            return "hole"
        for i, entry in enumerate(vc.log, 1):
            if entry.ui.counter != i or entry.ui.replica != vc.sender:
                return "hole"
            if not verify_ui(key, entry.statement, entry.ui):
                return "bad log entry"
        try:
            for entry in vc.log:
                parse_statement(entry.statement)
        except (DecodeError, ValueError):
            return "bad log entry"
        return self._evidence_problem(vc)

    @staticmethod
    def statements(vc: ViewChange) -> list[tuple[Statement, UsigCertificate]]:
        return [(parse_statement(e.statement), e.ui) for e in vc.log]

    # ------------------------------------------------------ protocol hooks

    def _new_command(self, cmd: Command) -> None:
        raise NotImplementedError

    def _leave_view(self) -> None:
        raise NotImplementedError

    def _view_change_evidence(self) -> tuple[tuple, tuple, tuple[Batch, ...]]:
        raise NotImplementedError

    def _evidence_problem(self, vc: ViewChange) -> Optional[str]:
        raise NotImplementedError

    def _compute_adopted(self, vcs: tuple[ViewChange, ...]) -> tuple:
        raise NotImplementedError

    def _install(self, nv: NewView) -> None:
        raise NotImplementedError
