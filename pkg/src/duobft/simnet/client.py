"""Closed-loop client: one outstanding command, accepted on f+1 matching replies."""

from __future__ import annotations

from duobft.messages import ClientReply, ClientRequest, Command, Model, ResponseModel
from duobft.replica import BROADCAST, CancelTimer, Note, Send, SetTimer


def make_payload(client: int, sequence: int, size: int) -> bytes:
    stamp = client.to_bytes(4, "big", signed=True) + sequence.to_bytes(4, "big")
    return (stamp * (size // 8 + 1))[:size]


class Client:
    def __init__(self, node_id: int, n: int, f: int, model: ResponseModel, requests: int,
                 payload_size: int = 512, timeout: int = 2000):
        self.id = node_id
        self.n = n
        self.f = f
        self.model = model
        self.requests = requests
        self.payload_size = payload_size
        self.timeout = timeout
        self.view = 0
        self.sequence = 0
        self.command: Command | None = None
        self.replies: dict[Model, dict[bytes, set[int]]] = {}
        self.accepted: set[Model] = set()
        self.done = requests == 0

    @property
    def wanted(self) -> set[Model]:
        return {m for m in Model if self.model.wants(m)}

    def start(self) -> list:
        return self._next() if self.requests else []

    def _next(self) -> list:
        if self.sequence >= self.requests:
            self.done = True
            self.command = None
            return [Note("client_done", {"client": self.id}), CancelTimer("retry")]
        self.sequence += 1
        self.command = Command(self.id, self.sequence,
                               make_payload(self.id, self.sequence, self.payload_size), self.model)
        self.replies = {}
        self.accepted = set()
        return [Note("submit", {"client": self.id, "seq": self.sequence,
                                "model": self.model.name}),
                Send(self.view % self.n, ClientRequest(self.command)),
                SetTimer("retry", self.timeout)]

    def handle(self, src: int, msg) -> list:
        if not isinstance(msg, ClientReply) or self.command is None:
            return []
        if msg.replica != src or msg.sequence != self.command.sequence or msg.client != self.id:
            return []
        if msg.model in self.accepted or msg.model not in self.wanted:
            return []
        voters = self.replies.setdefault(msg.model, {}).setdefault(msg.result_digest, set())
        voters.add(msg.replica)
        self.view = max(self.view, msg.view)
        if len(voters) < self.f + 1:
            return []
        self.accepted.add(msg.model)
        out = [Note("accept", {"client": self.id, "seq": self.command.sequence,
                               "model": msg.model.name})]
        if self.accepted >= self.wanted:
            out.extend(self._next())
        return out

    def on_timer(self, name: str) -> list:
        if name != "retry" or self.command is None:
            return []
        # the primary may be faulty: let every replica see the request
        return [Send(BROADCAST, ClientRequest(self.command)), SetTimer("retry", self.timeout)]
