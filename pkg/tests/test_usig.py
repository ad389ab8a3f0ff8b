from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from duobft.crypto import keygen
from duobft.usig import UsigInstance, repeat_last, verify_ui


def fresh(owner=0):
    return UsigInstance(owner, keygen(owner))


def test_counters_start_at_one_and_increase():
    u = fresh()
    assert [u.create_ui(m).counter for m in (b"a", b"b", b"c")] == [1, 2, 3]


def test_round_trip_and_tamper():
    u = fresh(1)
    ui = u.create_ui(b"prepare")
    assert verify_ui(u.public, b"prepare", ui)
    assert not verify_ui(u.public, b"prepare", replace(ui, counter=ui.counter + 1))
    assert not verify_ui(u.public, b"other", ui)
    assert not verify_ui(fresh(2).public, b"prepare", ui)


def test_malformed_certificate_is_false():
    u = fresh()
    assert not verify_ui(u.public, b"m", None)
    assert not verify_ui(u.public, b"m", "not a cert")
    ui = u.create_ui(b"m")
    assert not verify_ui(u.public, b"m", replace(ui, signature=b"\x01"))
    assert not verify_ui(u.public, b"m", replace(ui, counter=0))


def test_honest_instance_refuses_to_forge():
    u = fresh()
    u.create_ui(b"a")
    with pytest.raises(PermissionError):
        u.forge(b"b", 1)


def test_compromised_repeat_last_gives_two_valid_certs_for_one_counter():
    u = fresh()
    u.compromise(repeat_last)
    a, b = u.create_ui(b"block A"), u.create_ui(b"block A'")
    assert a.counter == b.counter == 1
    assert a.message_digest != b.message_digest
    assert verify_ui(u.public, b"block A", a) and verify_ui(u.public, b"block A'", b)


@given(st.lists(st.binary(max_size=32), min_size=1, max_size=40))
def test_honest_counters_are_exactly_one_to_n(messages):
    u = fresh(3)
    certs = [u.create_ui(m) for m in messages]
    assert sorted(c.counter for c in certs) == list(range(1, len(messages) + 1))
    assert all(verify_ui(u.public, m, c) for m, c in zip(messages, certs))
    # no two verifying certificates share a counter with different digests
    by_counter = {}
    for c in certs:
        assert by_counter.setdefault(c.counter, c.message_digest) == c.message_digest
