from collections import deque

from hypothesis import settings

from duobft.crypto import keygen
from duobft.messages import ClientRequest, Command, ResponseModel
from duobft.replica import BROADCAST, ReplicaConfig, Send
from duobft.usig import UsigInstance

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


class Wire:
    """Hand-cranked message routing between replica objects, FIFO, no clock.

    ``hold`` is a predicate on (src, dest, msg); matching messages stay parked
    in ``held`` instead of being delivered.
    """

    def __init__(self, replicas):
        self.replicas = {r.id: r for r in replicas}
        self.queue = deque()
        self.held = []
        self.hold = lambda src, dest, msg: False
        self.notes = []
        self.client_mail = []

    def push(self, src, actions):
        for act in actions:
            if isinstance(act, Send):
                dests = self.replicas if act.dest == BROADCAST else [act.dest]
                for d in dests:
                    self.queue.append((src, d, act.msg))
            elif type(act).__name__ == "Note":
                self.notes.append((src, act.kind, act.data))

    def inject(self, src, dest, msg):
        self.queue.append((src, dest, msg))

    def run(self, limit=100_000):
        steps = 0
        while self.queue and steps < limit:
            src, dest, msg = self.queue.popleft()
            steps += 1
            if dest not in self.replicas:
                self.client_mail.append((src, dest, msg))
                continue
            if self.hold(src, dest, msg):
                self.held.append((src, dest, msg))
                continue
            self.push(dest, self.replicas[dest].handle(src, msg))
        return steps

    def release(self):
        held, self.held = self.held, []
        self.queue.extend(held)

    def timeout(self, rid, name="progress"):
        self.push(rid, self.replicas[rid].on_timer(name))

    def kinds(self, kind):
        return [(src, data) for src, k, data in self.notes if k == kind]


def build_replicas(cls, params, config=ReplicaConfig(), key_base=0):
    pairs = [keygen(key_base + r) for r in range(params.n)]
    keys = {r: pairs[r].public for r in range(params.n)}
    return [cls(r, params, UsigInstance(r, pairs[r]), keys, config) for r in range(params.n)]


def request(client, seq, model=ResponseModel.HYBRID, payload=b"x"):
    return ClientRequest(Command(client, seq, payload, model))


# acceptance criteria append (name, passed, detail); printed after the run
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for name, passed, detail in sorted(ACCEPTANCE):
            terminalreporter.write_line(f"{name} {'PASS' if passed else 'FAIL'} {detail}")
