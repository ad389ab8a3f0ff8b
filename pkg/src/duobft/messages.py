"""Wire types for both protocols and their canonical binary encoding.

Every value encodes to a single byte string: a one-byte type tag followed by
the fields in declaration order. Integers are 8-byte big-endian signed,
byte strings and sequences carry a 4-byte length prefix, optional values a
one-byte presence marker. Digests and USIG statements are computed over this
form, so it must never change shape.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, fields
from functools import cached_property
from typing import Optional

from duobft.crypto import hash_bytes
from duobft.usig import UsigCertificate

DEFAULT_BATCH_SIZE = 200
DEFAULT_PAYLOAD_SIZE = 512


class DecodeError(ValueError):
    pass


class ResponseModel(enum.IntEnum):
    HYBRID = 1
    BFT = 2
    BOTH = 3

    def wants(self, model: "Model") -> bool:
        return self is ResponseModel.BOTH or self.value == model.value


class Model(enum.IntEnum):
    """Fault model a commit (or certificate flavor) belongs to."""

    HYBRID = 1
    BFT = 2


@dataclass(frozen=True)
class Command:
    client: int
    sequence: int
    payload: bytes
    response_model: ResponseModel = ResponseModel.HYBRID

    @property
    def id(self) -> tuple[int, int]:
        return (self.client, self.sequence)


@dataclass(frozen=True)
class Block:
    height: int
    parent_digest: Optional[bytes]
    commands: tuple[Command, ...]
    instance: int = 0

    @cached_property
    def digest(self) -> bytes:
        return hash_bytes(encode(self))


@dataclass(frozen=True)
class Batch:
    """MinBFT request batch; the unit a Prepare orders."""

    commands: tuple[Command, ...]

    @cached_property
    def digest(self) -> bytes:
        return hash_bytes(encode(self))


@dataclass(frozen=True)
class CertVote:
    replica: int
    ui: UsigCertificate


@dataclass(frozen=True)
class QuorumCertificate:
    block_digest: bytes
    height: int
    view: int
    instance: int
    votes: tuple[CertVote, ...]
    flavor: Model

    @property
    def signers(self) -> frozenset[int]:
        return frozenset(v.replica for v in self.votes)


@dataclass(frozen=True)
class Propose:
    view: int
    sender: int
    block: Block
    justify: Optional[QuorumCertificate]
    ui: UsigCertificate


@dataclass(frozen=True)
class Vote:
    view: int
    sender: int
    block_digest: bytes
    height: int
    instance: int
    proposer_ui: UsigCertificate
    voter_ui: UsigCertificate


@dataclass(frozen=True)
class CertBroadcast:
    view: int
    sender: int
    certificate: QuorumCertificate


@dataclass(frozen=True)
class Prepare:
    view: int
    sender: int
    seq: int
    batch: Batch
    ui: UsigCertificate


@dataclass(frozen=True)
class Commit:
    view: int
    sender: int
    primary: int
    seq: int
    batch: Batch
    primary_ui: UsigCertificate
    ui: UsigCertificate


@dataclass(frozen=True)
class ReqViewChange:
    sender: int
    old_view: int
    new_view: int


@dataclass(frozen=True)
class LogEntry:
    """One USIG-attested statement previously issued by a replica."""

    statement: bytes
    ui: UsigCertificate


@dataclass(frozen=True)
class ViewChange:
    sender: int
    new_view: int
    log: tuple[LogEntry, ...]
    certificates: tuple[QuorumCertificate, ...]
    blocks: tuple[Block, ...]
    batches: tuple[Batch, ...]
    ui: UsigCertificate


@dataclass(frozen=True)
class AdoptedEntry:
    """One element of a new view's adopted sequence.

    DuoBFT uses (instance, height, block digest); MinBFT uses
    (sequence number, source view, batch digest).
    """

    major: int
    minor: int
    digest: bytes


@dataclass(frozen=True)
class NewView:
    sender: int
    new_view: int
    view_changes: tuple[ViewChange, ...]
    adopted: tuple[AdoptedEntry, ...]
    ui: UsigCertificate


@dataclass(frozen=True)
class ClientRequest:
    command: Command


@dataclass(frozen=True)
class ClientReply:
    replica: int
    client: int
    sequence: int
    model: Model
    view: int
    result_digest: bytes


# --------------------------------------------------------------------------
# canonical codec

_INT = struct.Struct(">q")
_LEN = struct.Struct(">I")

# field kinds: "int", "bytes", "obytes", "enum:<Name>", "<Type>", "?<Type>", "*<Type>"
_SCHEMA: dict[type, tuple[int, tuple[tuple[str, str], ...]]] = {}
_BY_TAG: dict[int, type] = {}
_ENUMS = {"ResponseModel": ResponseModel, "Model": Model}


def _register(cls: type, tag: int, spec: str) -> None:
    kinds = tuple(s.strip() for s in spec.split(",")) if spec else ()
    names = tuple(f.name for f in fields(cls))
    assert len(names) == len(kinds), cls
    _SCHEMA[cls] = (tag, tuple(zip(names, kinds)))
    _BY_TAG[tag] = cls


_register(Command, 1, "int, int, bytes, enum:ResponseModel")
_register(Block, 2, "int, obytes, *Command, int")
_register(Batch, 3, "*Command")
_register(UsigCertificate, 4, "int, int, bytes, bytes")
_register(CertVote, 5, "int, UsigCertificate")
_register(QuorumCertificate, 6, "bytes, int, int, int, *CertVote, enum:Model")
_register(Propose, 10, "int, int, Block, ?QuorumCertificate, UsigCertificate")
_register(Vote, 11, "int, int, bytes, int, int, UsigCertificate, UsigCertificate")
_register(CertBroadcast, 12, "int, int, QuorumCertificate")
_register(Prepare, 13, "int, int, int, Batch, UsigCertificate")
_register(Commit, 14, "int, int, int, int, Batch, UsigCertificate, UsigCertificate")
_register(ReqViewChange, 15, "int, int, int")
_register(LogEntry, 16, "bytes, UsigCertificate")
_register(ViewChange, 17, "int, int, *LogEntry, *QuorumCertificate, *Block, *Batch, UsigCertificate")
_register(AdoptedEntry, 18, "int, int, bytes")
_register(NewView, 19, "int, int, *ViewChange, *AdoptedEntry, UsigCertificate")
_register(ClientRequest, 20, "Command")
_register(ClientReply, 21, "int, int, int, enum:Model, int, bytes")

_CLASSES = {cls.__name__: cls for cls in _SCHEMA}


def _enc_value(kind: str, value, out: list) -> None:
    if kind == "int":
        out.append(_INT.pack(value))
    elif kind == "bytes":
        out.append(_LEN.pack(len(value)))
        out.append(value)
    elif kind == "obytes":
        if value is None:
            out.append(b"\x00")
        else:
            out.append(b"\x01")
            _enc_value("bytes", value, out)
    elif kind.startswith("enum:"):
        out.append(bytes((int(value),)))
    elif kind[0] == "?":
        if value is None:
            out.append(b"\x00")
        else:
            out.append(b"\x01")
            _enc_obj(value, out)
    elif kind[0] == "*":
        out.append(_LEN.pack(len(value)))
        for item in value:
            _enc_obj(item, out)
    else:
        _enc_obj(value, out)


def _enc_obj(obj, out: list) -> None:
    try:
        tag, schema = _SCHEMA[type(obj)]
    except KeyError:
        raise TypeError(f"cannot encode {type(obj).__name__}") from None
    out.append(bytes((tag,)))
    for name, kind in schema:
        _enc_value(kind, getattr(obj, name), out)


def encode(obj) -> bytes:
    """Canonical bytes of any wire value."""
    out: list = []
    _enc_obj(obj, out)
    return b"".join(out)


class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.buf):
            raise DecodeError("truncated input")
        chunk = self.buf[self.pos:end]
        self.pos = end
        return chunk


def _dec_value(kind: str, r: _Reader):
    if kind == "int":
        return _INT.unpack(r.take(8))[0]
    if kind == "bytes":
        (n,) = _LEN.unpack(r.take(4))
        return bytes(r.take(n))
    if kind == "obytes":
        marker = r.take(1)[0]
        if marker == 0:
            return None
        if marker != 1:
            raise DecodeError("bad optional marker")
        return _dec_value("bytes", r)
    if kind.startswith("enum:"):
        try:
            return _ENUMS[kind[5:]](r.take(1)[0])
        except ValueError as exc:
            raise DecodeError(str(exc)) from None
    if kind[0] == "?":
        marker = r.take(1)[0]
        if marker == 0:
            return None
        if marker != 1:
            raise DecodeError("bad optional marker")
        return _dec_obj(r, _CLASSES[kind[1:]])
    if kind[0] == "*":
        (n,) = _LEN.unpack(r.take(4))
        cls = _CLASSES[kind[1:]]
        return tuple(_dec_obj(r, cls) for _ in range(n))
    return _dec_obj(r, _CLASSES[kind])


def _dec_obj(r: _Reader, expected: Optional[type] = None):
    tag = r.take(1)[0]
    cls = _BY_TAG.get(tag)
    if cls is None:
        raise DecodeError(f"unknown type tag {tag}")
    if expected is not None and cls is not expected:
        raise DecodeError(f"expected {expected.__name__}, got {cls.__name__}")
    _, schema = _SCHEMA[cls]
    return cls(*(_dec_value(kind, r) for _, kind in schema))


def decode(data: bytes):
    """Inverse of :func:`encode`; raises :class:`DecodeError` on bad input."""
    r = _Reader(data)
    obj = _dec_obj(r)
    if r.pos != len(data):
        raise DecodeError("trailing bytes")
    return obj


serialize = encode
deserialize = decode


def block_digest(block: Block) -> bytes:
    return block.digest


# --------------------------------------------------------------------------
# USIG statements: what each attested message actually commits to

class Stmt(enum.IntEnum):
    PROPOSE = 1
    VOTE = 2
    PREPARE = 3
    COMMIT = 4
    VIEW_CHANGE = 5
    NEW_VIEW = 6


_HDR = struct.Struct(">Bqqqq")  # kind, view, sender, instance, height
_PREP = struct.Struct(">Bqq")  # kind, view, sender
_SEQ = struct.Struct(">Bqqq")  # kind, view, sender, seq
_COMMIT = struct.Struct(">Bqqqqq")  # kind, view, sender, primary, seq, primary counter


@dataclass(frozen=True)
class Statement:
    kind: Stmt
    view: int
    sender: int
    instance: int = 0
    height: int = 0  # block height, or MinBFT sequence number
    digest: bytes = b""
    primary: int = -1
    primary_counter: int = 0
    primary_sig: bytes = b""

    def primary_ui(self) -> UsigCertificate:
        """The primary's Prepare certificate embedded in a Commit statement."""
        return UsigCertificate(self.primary, self.primary_counter,
                               self.primary_sig[:32], self.primary_sig[32:])


def block_statement(kind: Stmt, view: int, sender: int, instance: int, height: int,
                    digest: bytes) -> bytes:
    return _HDR.pack(kind, view, sender, instance, height) + digest


def propose_statement(view: int, sender: int, block: Block) -> bytes:
    return block_statement(Stmt.PROPOSE, view, sender, block.instance, block.height, block.digest)


def vote_statement(view: int, sender: int, instance: int, height: int, digest: bytes) -> bytes:
    return block_statement(Stmt.VOTE, view, sender, instance, height, digest)


def prepare_statement(view: int, sender: int, seq: int, batch_digest: bytes) -> bytes:
    return _SEQ.pack(Stmt.PREPARE, view, sender, seq) + batch_digest


def commit_statement(view: int, sender: int, primary: int, seq: int, batch_digest: bytes,
                     primary_ui: UsigCertificate) -> bytes:
    return (_COMMIT.pack(Stmt.COMMIT, view, sender, primary, seq, primary_ui.counter)
            + batch_digest + primary_ui.message_digest + primary_ui.signature)


def view_change_statement(vc: ViewChange) -> bytes:
    body = encode(ViewChange(vc.sender, vc.new_view, vc.log, vc.certificates,
                             tuple(_stub_block(b) for b in vc.blocks),
                             tuple(_stub_batch(b) for b in vc.batches), _NO_UI))
    return _PREP.pack(Stmt.VIEW_CHANGE, vc.new_view, vc.sender) + hash_bytes(body)


def new_view_statement(nv: NewView) -> bytes:
    vc_digests = b"".join(hash_bytes(view_change_statement(vc)) for vc in nv.view_changes)
    adopted = encode(NewView(nv.sender, nv.new_view, (), nv.adopted, _NO_UI))
    return (_PREP.pack(Stmt.NEW_VIEW, nv.new_view, nv.sender)
            + hash_bytes(vc_digests) + hash_bytes(adopted))


_NO_UI = UsigCertificate(-1, 0, b"", b"")


def _stub_block(block: Block) -> Block:
    # bind content through the digest only; keeps statement hashing cheap
    return Block(0, block.digest, (), 0)


def _stub_batch(batch: Batch) -> Batch:
    return Batch((Command(0, 0, batch.digest),))


def parse_statement(data: bytes) -> Statement:
    if not data:
        raise DecodeError("empty statement")
    kind = Stmt(data[0])
    if kind in (Stmt.PROPOSE, Stmt.VOTE):
        if len(data) != _HDR.size + 32:
            raise DecodeError("bad block statement")
        _, view, sender, instance, height = _HDR.unpack_from(data)
        return Statement(kind, view, sender, instance, height, data[_HDR.size:])
    if kind is Stmt.PREPARE:
        if len(data) != _SEQ.size + 32:
            raise DecodeError("bad prepare statement")
        _, view, sender, seq = _SEQ.unpack_from(data)
        return Statement(kind, view, sender, height=seq, digest=data[_SEQ.size:],
                         primary=sender)
    if kind is Stmt.COMMIT:
        if len(data) != _COMMIT.size + 32 + 32 + 64:
            raise DecodeError("bad commit statement")
        _, view, sender, primary, seq, pctr = _COMMIT.unpack_from(data)
        rest = data[_COMMIT.size:]
        return Statement(kind, view, sender, height=seq, digest=rest[:32], primary=primary,
                         primary_counter=pctr, primary_sig=rest[32:])
    if len(data) != _PREP.size + (32 if kind is not Stmt.NEW_VIEW else 64):
        raise DecodeError("bad statement")
    _, view, sender = _PREP.unpack_from(data)
    return Statement(kind, view, sender, digest=data[_PREP.size:_PREP.size + 32])
