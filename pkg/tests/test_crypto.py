import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gossicrypt.crypto import (
    KEY_SIZE,
    MAC_ONLY,
    STANDARD,
    TOY,
    DecryptFailed,
    SinkKeyPair,
    SymmetricKey,
    SystemRandom,
    encode_fields,
    get_suite,
)

SUITES = [STANDARD, MAC_ONLY, TOY]
AUTHENTICATED = [STANDARD, TOY]
keys = st.binary(min_size=KEY_SIZE, max_size=KEY_SIZE).map(SymmetricKey)


@pytest.mark.parametrize("suite", SUITES, ids=lambda s: s.name)
@given(key=keys, pt=st.binary(max_size=300))
@settings(max_examples=50, deadline=None)
def test_ske_roundtrip(suite, key, pt):
    rng = np.random.default_rng(0)
    ct = suite.ske_encrypt(key, pt, rng)
    assert len(ct) == len(pt) + suite.ske_overhead
    assert suite.ske_decrypt(key, ct) == pt


@pytest.mark.parametrize("suite", AUTHENTICATED, ids=lambda s: s.name)
def test_ske_wrong_key_and_tamper(suite, rng):
    k1, k2 = SymmetricKey.generate(rng), SymmetricKey.generate(rng)
    ct = suite.ske_encrypt(k1, b"hello sink", rng)
    with pytest.raises(DecryptFailed):
        suite.ske_decrypt(k2, ct)
    bad = bytearray(ct)
    bad[3] ^= 1
    with pytest.raises(DecryptFailed):
        suite.ske_decrypt(k1, bytes(bad))
    with pytest.raises(DecryptFailed):
        suite.ske_decrypt(k1, ct[:4])


@pytest.mark.parametrize("suite", SUITES, ids=lambda s: s.name)
def test_mac(suite, rng):
    k = SymmetricKey.generate(rng)
    tag = suite.mac(k, b"msg")
    assert len(tag) == suite.mac_size
    assert suite.mac_verify(k, b"msg", tag)
    assert not suite.mac_verify(k, b"msg!", tag)
    assert not suite.mac_verify(SymmetricKey.generate(rng), b"msg", tag)


def test_toy_is_deterministic():
    k = SymmetricKey(bytes(range(16)))
    assert TOY.ske_encrypt(k, b"abc") == TOY.ske_encrypt(k, b"abc")


def test_pke_roundtrip_and_determinism():
    kp = SinkKeyPair.generate(np.random.default_rng(5))
    a = STANDARD.pke_encrypt(kp.public, b"secret", np.random.default_rng(9))
    b = TOY.pke_encrypt(kp.public, b"secret", np.random.default_rng(9))
    assert a == b
    assert STANDARD.pke_decrypt(kp.private, a) == b"secret"
    other = SinkKeyPair.generate(np.random.default_rng(6))
    with pytest.raises(DecryptFailed):
        STANDARD.pke_decrypt(other.private, a)
    with pytest.raises(DecryptFailed):
        STANDARD.pke_decrypt(kp.private, a[:20])


def test_symmetric_key_validation(rng):
    with pytest.raises(ValueError):
        SymmetricKey(b"short")
    with pytest.raises(ValueError):
        SymmetricKey(bytes(16), -1)
    k = SymmetricKey.generate(rng)
    k2 = k.refreshed(rng)
    assert k2.version == k.version + 1 and k2.material != k.material


@given(st.lists(st.binary(max_size=20), max_size=4), st.lists(st.binary(max_size=20), max_size=4))
def test_encode_fields_injective(a, b):
    if a != b:
        assert encode_fields(*a) != encode_fields(*b)


def test_system_random():
    r = SystemRandom()
    assert len(r.bytes(16)) == 16
    assert 0 <= r.random() < 1
    k = SymmetricKey.generate(r)
    assert STANDARD.ske_decrypt(k, STANDARD.ske_encrypt(k, b"x", r)) == b"x"


def test_get_suite():
    assert get_suite("toy") is TOY
    with pytest.raises(ValueError):
        get_suite("rot13")


@pytest.mark.parametrize("suite", SUITES, ids=lambda s: s.name)
def test_thousand_random_roundtrips(suite):
    rng = np.random.default_rng(77)
    for _ in range(1000):
        key = SymmetricKey.generate(rng)
        pt = rng.bytes(int(rng.integers(0, 64)))
        assert suite.ske_decrypt(key, suite.ske_encrypt(key, pt, rng)) == pt


def test_mac_only_wrong_key_gives_garbage(rng):
    k1, k2 = SymmetricKey.generate(rng), SymmetricKey.generate(rng)
    ct = MAC_ONLY.ske_encrypt(k1, b"hello sink", rng)
    assert MAC_ONLY.ske_decrypt(k2, ct) != b"hello sink"
    with pytest.raises(DecryptFailed):
        MAC_ONLY.ske_decrypt(k1, ct[:8])


@pytest.mark.parametrize("suite", SUITES, ids=lambda s: s.name)
def test_mac_rejects_every_bit_flip(suite):
    key = SymmetricKey(bytes(range(16)))
    msg = b"twenty byte message!"
    tag = suite.mac(key, msg)
    for i in range(len(msg) * 8):
        flipped = bytearray(msg)
        flipped[i // 8] ^= 1 << (i % 8)
        assert not suite.mac_verify(key, bytes(flipped), tag)
    for i in range(len(tag) * 8):
        flipped = bytearray(tag)
        flipped[i // 8] ^= 1 << (i % 8)
        assert not suite.mac_verify(key, msg, bytes(flipped))


def test_mac_no_collisions():
    rng = np.random.default_rng(1)
    key = SymmetricKey.generate(rng)
    tags = {STANDARD.mac(key, rng.bytes(20)) for _ in range(10_000)}
    assert len(tags) == 10_000
    msg = b"m" * 20
    assert len({STANDARD.mac(SymmetricKey.generate(rng), msg) for _ in range(10_000)}) == 10_000


def test_pke_length():
    kp = SinkKeyPair.generate(np.random.default_rng(5))
    pt = bytes(18)
    assert len(STANDARD.pke_encrypt(kp.public, pt, np.random.default_rng(1))) >= len(pt)
