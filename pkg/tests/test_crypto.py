import random

from hypothesis import given, strategies as st

from duobft.crypto import DIGEST_SIZE, hash_bytes, keygen, sign, verify


def test_keygen_is_deterministic():
    assert keygen(7) == keygen(7)
    assert keygen(7) != keygen(8)


def test_sign_verify_round_trip():
    kp = keygen(7)
    sig = sign(kp.secret, b"block")
    assert verify(kp.public, b"block", sig)


def test_flipped_payload_bit_fails():
    kp = keygen(7)
    msg = bytearray(b"block payload")
    sig = sign(kp.secret, bytes(msg))
    msg[3] ^= 0x01
    assert not verify(kp.public, bytes(msg), sig)


def test_wrong_replica_key_fails():
    sig = sign(keygen(2).secret, b"vote")
    assert not verify(keygen(3).public, b"vote", sig)


def test_malformed_signature_is_false_not_error():
    kp = keygen(1)
    assert not verify(kp.public, b"m", b"short")
    assert not verify(kp.public, b"m", bytes(64))
    assert not verify(b"\x00" * 5, b"m", sign(kp.secret, b"m"))


def test_hash_is_pure_and_sized():
    assert hash_bytes(b"") == hash_bytes(b"")
    assert len(hash_bytes(b"abc")) == DIGEST_SIZE


def test_hash_distinct_over_random_corpus():
    rng = random.Random(20240101)
    corpus = {rng.randbytes(rng.randint(0, 64)) for _ in range(10_000)}
    digests = {hash_bytes(b) for b in corpus}
    assert len(digests) == len(corpus)


@given(st.integers(0, 2**32), st.binary(max_size=256))
def test_any_seed_any_message_round_trips(seed, msg):
    kp = keygen(seed)
    assert verify(kp.public, msg, sign(kp.secret, msg))


@given(st.integers(0, 1000), st.integers(0, 1000), st.binary(max_size=64), st.binary(max_size=64))
def test_cross_verification_fails(s1, s2, m1, m2):
    kp1, kp2 = keygen(s1), keygen(s2)
    sig = sign(kp1.secret, m1)
    assert verify(kp2.public, m2, sig) == (s1 == s2 and m1 == m2)
