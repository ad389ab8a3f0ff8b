"""In-process emulation of the USIG trusted counter service."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

from duobft import crypto


class UsigMode(enum.Enum):
    HONEST = "honest"
    COMPROMISED = "compromised"


@dataclass(frozen=True)
class UsigCertificate:
    """Attestation binding ``counter`` to ``message_digest`` for one replica."""

    replica: int
    counter: int
    message_digest: bytes
    signature: bytes


def _signed_bytes(replica: int, counter: int, digest: bytes) -> bytes:
    return b"USIG" + replica.to_bytes(4, "big") + counter.to_bytes(8, "big") + digest


# A compromised counter script receives the last issued counter and returns
# the counter to stamp on the next certificate.
CounterScript = Callable[[int], int]


def repeat_last(last: int) -> int:
    return max(last, 1)


def honest_next(last: int) -> int:
    return last + 1


class UsigInstance:
    """One replica's trusted counter.

    In HONEST mode counters are issued 1, 2, 3, ... In COMPROMISED mode the
    attached script picks the counter, so repeats and skips are possible.
    """

    def __init__(self, owner: int, keypair: crypto.KeyPair):
        self.owner = owner
        self.keypair = keypair
        self.last_counter = 0
        self.mode = UsigMode.HONEST
        self.script: CounterScript = honest_next

    @property
    def public(self) -> bytes:
        return self.keypair.public

    def compromise(self, script: CounterScript = honest_next) -> None:
        self.mode = UsigMode.COMPROMISED
        self.script = script

    def create_ui(self, message: bytes) -> UsigCertificate:
        if self.mode is UsigMode.HONEST:
            counter = self.last_counter + 1
        else:
            counter = self.script(self.last_counter)
        self.last_counter = max(self.last_counter, counter)
        return self._stamp(counter, message)

    def forge(self, message: bytes, counter: int) -> UsigCertificate:
        """Sign ``message`` under an arbitrary counter (compromised mode only)."""
        if self.mode is not UsigMode.COMPROMISED:
            raise PermissionError("an honest USIG cannot reuse counters")
        self.last_counter = max(self.last_counter, counter)
        return self._stamp(counter, message)

    def _stamp(self, counter: int, message: bytes) -> UsigCertificate:
        digest = crypto.hash_bytes(message)
        sig = crypto.sign(self.keypair.secret, _signed_bytes(self.owner, counter, digest))
        return UsigCertificate(self.owner, counter, digest, sig)


def verify_ui(public: bytes, message: bytes, cert: Optional[UsigCertificate]) -> bool:
    if not isinstance(cert, UsigCertificate) or cert.counter < 1:
        return False
    if crypto.hash_bytes(message) != cert.message_digest:
        return False
    return crypto.verify(
        public, _signed_bytes(cert.replica, cert.counter, cert.message_digest), cert.signature
    )
