"""Signature schemes and canonical framing."""

import pytest
from hypothesis import given, settings, strategies as st

from pbts import sigcrypto as sc

# Deterministic outputs frozen from first implementation; any change to
# key derivation, hashing-to-curve, or serialization shows up here.
GOLDEN_PK = "a3a9084266aba7b1e7cd93dcbfcba483f304151613181e03bc0af98f61e51bdab1a0c778c0297ca41e27343cfa28b137"
GOLDEN_SIG = (
    "b2a8987c7c879fb825b36a8eb95dd2d74e8733d7a1c877e7286591971ff380e5"
    "0abdf2f22cd7538d704bbba67a8a631e155d95a8f5167cb4472052dd53830c63"
    "6f5d5c39001a7a83865e5633b8e5dae0a89635e4b8d90c1840fb096e06c1b907"
)
GOLDEN_SESSION_PK = "02e4bdbaf4c9fe4971fec7c120a9567941bf3fea4a92074b6f9c9fdc098cfc9e1c"
GOLDEN_SESSION_SIG = (
    "2e2b807335b76ca9fde23c3cd246c91edb9b6880cf2e7eb2bb24ba784ba02741"
    "736cbf8e0870026f89004c92d64ef77549d8031034f9773e13f387b77a8e95a5"
)


def test_hash_data_known_answer():
    # SHA-256 of the empty string, the standard test vector
    assert sc.hash_data(b"").hex() == (
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )
    assert len(sc.hash_data(b"x")) == sc.DIGEST_LEN


class TestCanonicalEncoding:
    def test_golden_bytes(self):
        # hand-assembled expected encoding: count, then tag/len/data per field
        blob = sc.canonical_encode([(sc.TAG_ATOM, b"hi"), (sc.TAG_UINT, sc.enc_uint(7))])
        expect = (
            b"\x00\x00\x00\x02"
            + b"\x01" + b"\x00\x00\x00\x02" + b"hi"
            + b"\x05" + b"\x00\x00\x00\x08" + (7).to_bytes(8, "big")
        )
        assert blob == expect

    def test_concatenation_ambiguity_killed(self):
        a = sc.canonical_encode([(sc.TAG_BYTES, b"a"), (sc.TAG_BYTES, b"bc")])
        b = sc.canonical_encode([(sc.TAG_BYTES, b"ab"), (sc.TAG_BYTES, b"c")])
        assert a != b

    @given(st.lists(st.tuples(st.integers(0, 255), st.binary(max_size=64)), max_size=8))
    @settings(max_examples=200)
    def test_round_trip(self, fields):
        blob = sc.canonical_encode(fields)
        assert sc.canonical_decode(blob) == [(t, bytes(d)) for t, d in fields]

    def test_decode_rejects_trailing(self):
        blob = sc.canonical_encode([(sc.TAG_ATOM, b"x")])
        with pytest.raises(ValueError):
            sc.canonical_decode(blob + b"\x00")

    @given(st.integers(0, 30))
    @settings(max_examples=40)
    def test_decode_rejects_truncation(self, cut):
        blob = sc.canonical_encode([(sc.TAG_ATOM, b"hello"), (sc.TAG_DIGEST, b"\0" * 32)])
        if cut < len(blob):
            with pytest.raises(ValueError):
                sc.canonical_decode(blob[:cut])

    def test_uint_range(self):
        assert sc.dec_uint(sc.enc_uint(0)) == 0
        assert sc.dec_uint(sc.enc_uint((1 << 64) - 1)) == (1 << 64) - 1
        with pytest.raises(ValueError):
            sc.enc_uint(-1)
        with pytest.raises(ValueError):
            sc.enc_uint(1 << 64)
        with pytest.raises(ValueError):
            sc.dec_uint(b"\x00" * 7)


class TestLongTermScheme:
    def test_golden_determinism(self):
        kp = sc.keygen(b"\x01" * 32)
        assert kp.pk.hex() == GOLDEN_PK
        assert sc.sign(kp.sk, b"golden message").hex() == GOLDEN_SIG
        # same seed, same keys, every time
        assert sc.keygen(b"\x01" * 32) == kp

    def test_sizes(self):
        kp = sc.keygen(b"\x07" * 32)
        assert len(kp.pk) == sc.PK_LEN
        assert len(sc.sign(kp.sk, b"m")) == sc.SIG_LEN

    def test_sign_verify_loop(self):
        kp = sc.keygen(b"\x03" * 32)
        other = sc.keygen(b"\x04" * 32)
        for i in range(40):
            msg = b"message-%d" % i
            sig = sc.sign(kp.sk, msg)
            assert sc.verify(kp.pk, msg, sig)
            assert not sc.verify(other.pk, msg, sig)
            assert not sc.verify(kp.pk, msg + b"!", sig)

    def test_verify_survives_garbage(self):
        kp = sc.keygen(b"\x05" * 32)
        assert not sc.verify(kp.pk, b"m", b"\x00" * 96)
        assert not sc.verify(kp.pk, b"m", b"junk")
        assert not sc.verify(b"not-a-key", b"m", sc.sign(kp.sk, b"m"))
        assert not sc.verify(kp.pk, b"m", b"")

    def test_bit_flip_rejected(self):
        kp = sc.keygen(b"\x06" * 32)
        sig = bytearray(sc.sign(kp.sk, b"m"))
        sig[17] ^= 0x40
        assert not sc.verify(kp.pk, b"m", bytes(sig))


class TestAggregation:
    def test_order_independent(self):
        kps = [sc.keygen(bytes([i]) * 32) for i in range(1, 4)]
        sigs = [sc.sign(kp.sk, b"msg-%d" % i) for i, kp in enumerate(kps)]
        fwd = sc.aggregate(sigs)
        rev = sc.aggregate(sigs[::-1])
        assert fwd.data == rev.data

    @given(st.integers(1, 6))
    @settings(max_examples=8, deadline=None)
    def test_aggregate_verifies(self, n):
        kps = [sc.keygen(bytes([40 + i]) * 32) for i in range(n)]
        pairs = [(kp.pk, b"agg-msg-%d" % i) for i, kp in enumerate(kps)]
        agg = sc.aggregate([sc.sign(kp.sk, m) for kp, (_, m) in zip(kps, pairs)])
        assert agg.count == n
        assert sc.aggregate_verify(pairs, agg)

    def test_large_batch(self):
        kps = [sc.keygen(bytes([i % 250 + 1, i // 250]) + b"\x00" * 30) for i in range(64)]
        pairs = [(kp.pk, b"wide-%d" % i) for i, kp in enumerate(kps)]
        agg = sc.aggregate([sc.sign(kp.sk, m) for kp, (_, m) in zip(kps, pairs)])
        assert sc.aggregate_verify(pairs, agg)

    def test_corruption_rejected(self):
        kps = [sc.keygen(bytes([i]) * 32) for i in range(10, 13)]
        pairs = [(kp.pk, b"c-%d" % i) for i, kp in enumerate(kps)]
        sigs = [sc.sign(kp.sk, m) for kp, (_, m) in zip(kps, pairs)]
        agg = sc.aggregate(sigs)
        bad = bytearray(agg.data)
        bad[5] ^= 1
        assert not sc.aggregate_verify(pairs, sc.AggregateSignature(bytes(bad), agg.count))
        # one substituted message breaks the whole batch
        wrong = list(pairs)
        wrong[1] = (wrong[1][0], b"not-what-was-signed")
        assert not sc.aggregate_verify(wrong, agg)
        # count mismatch is an outright reject
        assert not sc.aggregate_verify(pairs[:2], agg)

    def test_missing_signature_detected(self):
        kps = [sc.keygen(bytes([i]) * 32) for i in range(20, 23)]
        pairs = [(kp.pk, b"m-%d" % i) for i, kp in enumerate(kps)]
        sigs = [sc.sign(kp.sk, m) for kp, (_, m) in zip(kps, pairs)]
        partial = sc.aggregate(sigs[:2])
        assert not sc.aggregate_verify(pairs, sc.AggregateSignature(partial.data, 3))

    def test_empty_and_garbage_rejected(self):
        with pytest.raises(ValueError):
            sc.aggregate([])
        with pytest.raises(Exception):
            sc.aggregate([b"\xff" * 96])


class TestSessionScheme:
    def test_golden_determinism(self):
        kp = sc.session_keygen(b"\x02" * 32)
        assert kp.pk.hex() == GOLDEN_SESSION_PK
        assert sc.session_sign(kp.sk, b"golden message").hex() == GOLDEN_SESSION_SIG

    def test_sign_verify_loop(self):
        # cheap enough to hammer: distinct message per iteration
        kp = sc.session_keygen(b"\x08" * 32)
        other = sc.session_keygen(b"\x09" * 32)
        for i in range(1000):
            msg = b"s-%d" % i
            sig = sc.session_sign(kp.sk, msg)
            assert len(sig) == sc.SESSION_SIG_LEN
            assert sc.session_verify(kp.pk, msg, sig)
        sig = sc.session_sign(kp.sk, b"fixed")
        assert not sc.session_verify(other.pk, b"fixed", sig)
        assert not sc.session_verify(kp.pk, b"other", sig)
        assert not sc.session_verify(kp.pk, b"fixed", b"\x00" * 64)

    def test_not_aggregatable(self):
        kp = sc.session_keygen(b"\x0a" * 32)
        sig = sc.session_sign(kp.sk, b"m")
        with pytest.raises(Exception):
            sc.aggregate([sig])

    def test_cheaper_than_long_term(self):
        import time
        kp = sc.keygen(b"\x0b" * 32)
        skp = sc.session_keygen(b"\x0c" * 32)
        t0 = time.perf_counter()
        for i in range(20):
            sc.sign(kp.sk, b"t-%d" % i)
        bls = time.perf_counter() - t0
        t0 = time.perf_counter()
        for i in range(20):
            sc.session_sign(skp.sk, b"t-%d" % i)
        ecdsa = time.perf_counter() - t0
        assert bls / ecdsa > 1.0
