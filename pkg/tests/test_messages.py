import hashlib
import struct

import pytest
from hypothesis import given, strategies as st

from duobft.crypto import keygen
from duobft.messages import (
    AdoptedEntry,
    Batch,
    Block,
    CertBroadcast,
    CertVote,
    ClientReply,
    ClientRequest,
    Command,
    Commit,
    DecodeError,
    LogEntry,
    Model,
    NewView,
    Prepare,
    Propose,
    QuorumCertificate,
    ReqViewChange,
    ResponseModel,
    Stmt,
    ViewChange,
    Vote,
    commit_statement,
    decode,
    encode,
    parse_statement,
    prepare_statement,
    propose_statement,
    vote_statement,
)
from duobft.usig import UsigCertificate, UsigInstance

# genesis = Block(height 0, no parent, no commands, lane 0), encoded by hand:
# tag 0x02 | int64 height | 0x00 null-parent marker | u32 command count | int64 lane
GENESIS_BYTES = b"\x02" + struct.pack(">q", 0) + b"\x00" + struct.pack(">I", 0) + struct.pack(">q", 0)
GENESIS_DIGEST = "8570a6a4c9b398777b1253897b94d6ff0f60d39e3a06144aab8a394c1ce51f37"

ints = st.integers(-(2**40), 2**40)
small = st.integers(0, 50)
digests = st.binary(min_size=32, max_size=32)
uis = st.builds(UsigCertificate, small, st.integers(1, 2**40), digests,
                st.binary(min_size=64, max_size=64))
commands = st.builds(Command, small, small, st.binary(max_size=40),
                     st.sampled_from(list(ResponseModel)))
blocks = st.builds(Block, small, st.none() | digests, st.lists(commands, max_size=4).map(tuple),
                   small)
batches = st.builds(Batch, st.lists(commands, max_size=4).map(tuple))
cert_votes = st.builds(CertVote, small, uis)
qcs = st.builds(QuorumCertificate, digests, small, small, small,
                st.lists(cert_votes, max_size=4).map(tuple), st.sampled_from(list(Model)))
log_entries = st.builds(LogEntry, st.binary(max_size=80), uis)
view_changes = st.builds(ViewChange, small, small, st.lists(log_entries, max_size=3).map(tuple),
                         st.lists(qcs, max_size=2).map(tuple),
                         st.lists(blocks, max_size=2).map(tuple),
                         st.lists(batches, max_size=2).map(tuple), uis)
messages = st.one_of(
    st.builds(Propose, small, small, blocks, st.none() | qcs, uis),
    st.builds(Vote, small, small, digests, small, small, uis, uis),
    st.builds(CertBroadcast, small, small, qcs),
    st.builds(Prepare, small, small, small, batches, uis),
    st.builds(Commit, small, small, small, small, batches, uis, uis),
    st.builds(ReqViewChange, small, small, small),
    view_changes,
    st.builds(NewView, small, small, st.lists(view_changes, max_size=2).map(tuple),
              st.lists(st.builds(AdoptedEntry, small, ints, digests), max_size=3).map(tuple), uis),
    st.builds(ClientRequest, commands),
    st.builds(ClientReply, small, small, small, st.sampled_from(list(Model)), small, digests),
)


@given(messages)
def test_every_variant_round_trips(msg):
    data = encode(msg)
    assert decode(data) == msg
    assert encode(decode(data)) == data


@given(messages, st.data())
def test_truncated_buffer_is_a_decode_error(msg, data):
    raw = encode(msg)
    cut = data.draw(st.integers(0, len(raw) - 1))
    with pytest.raises(DecodeError):
        decode(raw[:cut])


def test_trailing_garbage_rejected():
    with pytest.raises(DecodeError):
        decode(encode(ReqViewChange(1, 0, 1)) + b"\x00")


def test_unknown_tag_rejected():
    with pytest.raises(DecodeError):
        decode(b"\xfe")


def test_genesis_encoding_matches_hand_encoding():
    genesis = Block(0, None, ())
    assert encode(genesis) == GENESIS_BYTES
    assert genesis.digest == hashlib.sha256(GENESIS_BYTES).digest()
    assert genesis.digest.hex() == GENESIS_DIGEST


def test_parent_digest_binds_the_chain():
    a = Block(2, b"\x01" * 32, ())
    b = Block(2, b"\x02" * 32, ())
    assert a.digest != b.digest


@given(st.lists(blocks, min_size=2, max_size=60, unique=True))
def test_block_digest_injective_over_corpus(corpus):
    assert len({b.digest for b in corpus}) == len(corpus)


def test_statements_parse_back():
    u = UsigInstance(0, keygen(0))
    blk = Block(3, b"\x05" * 32, (), 1)
    st_p = parse_statement(propose_statement(4, 0, blk))
    assert (st_p.kind, st_p.view, st_p.sender, st_p.instance, st_p.height, st_p.digest) == (
        Stmt.PROPOSE, 4, 0, 1, 3, blk.digest)
    st_v = parse_statement(vote_statement(4, 2, 1, 3, blk.digest))
    assert (st_v.kind, st_v.sender) == (Stmt.VOTE, 2)
    st_pr = parse_statement(prepare_statement(1, 1, 9, b"\x07" * 32))
    assert (st_pr.kind, st_pr.height, st_pr.primary) == (Stmt.PREPARE, 9, 1)
    pui = u.create_ui(prepare_statement(0, 0, 1, b"\x07" * 32))
    st_c = parse_statement(commit_statement(0, 2, 0, 1, b"\x07" * 32, pui))
    assert (st_c.kind, st_c.primary, st_c.height) == (Stmt.COMMIT, 0, 1)
    assert st_c.primary_ui() == pui


def test_garbled_statement_rejected():
    with pytest.raises((DecodeError, ValueError)):
        parse_statement(b"\x01short")
