"""Latency cost model, analytic projections, and host micro-benchmarks.

The published reference latencies live here as the cost model's defaults so
simulated runs charge realistic (and reproducible) milliseconds per
cryptographic operation instead of host-dependent wall time.  The projection
helpers answer two analytic questions: what each attestation policy costs for
a given torrent (`table1`), and how much signing inflates a download
(`throughput_overhead`).  `bench_crypto` measures the same quantities on the
local host for the hardware-relative checks.
"""

from __future__ import annotations

import itertools
import random
import time
from dataclasses import dataclass, field

from .. import attestation as at
from .. import sigcrypto as sc

REF_KEYGEN_MS = 7.54
REF_SIGN_MS = 134.19
REF_VERIFY_MS = 340.92
REF_AGG_VERIFY_MS = {10: 1293.18, 25: 3959.54, 50: 6535.18, 100: 14230.40}
# The fast per-piece scheme is cited as roughly 10x cheaper than the
# aggregatable one; no absolute reference latency is published for it.
REF_SESSION_SIGN_MS = REF_SIGN_MS / 10
REF_SESSION_VERIFY_MS = REF_VERIFY_MS / 10

MIB = 1 << 20
GIB = 1 << 30


@dataclass(frozen=True)
class CostModel:
    sign_ms: float = REF_SIGN_MS
    verify_ms: float = REF_VERIFY_MS
    session_sign_ms: float = REF_SESSION_SIGN_MS
    session_verify_ms: float = REF_SESSION_VERIFY_MS
    agg_verify_ms: dict = field(default_factory=lambda: dict(REF_AGG_VERIFY_MS))
    bandwidth: float = float(MIB)  # bytes per second

    def __post_init__(self):
        for name in ("sign_ms", "verify_ms", "session_sign_ms", "session_verify_ms", "bandwidth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if any(v <= 0 for v in self.agg_verify_ms.values()):
            raise ValueError("aggregate verify latencies must be positive")

    def agg_verify(self, batch: int) -> float:
        """Aggregate-verification latency for an arbitrary batch size,
        piecewise-linear through the calibration table."""
        if batch <= 0:
            return 0.0
        table = sorted(self.agg_verify_ms.items())
        if batch in self.agg_verify_ms:
            return self.agg_verify_ms[batch]
        lo_n, lo_v = table[0]
        if batch < lo_n:
            return lo_v * batch / lo_n
        for (a_n, a_v), (b_n, b_v) in zip(table, table[1:]):
            if a_n < batch <= b_n:
                return a_v + (b_v - a_v) * (batch - a_n) / (b_n - a_n)
        (a_n, a_v), (b_n, b_v) = table[-2], table[-1]
        slope = (b_v - a_v) / (b_n - a_n)
        return b_v + slope * (batch - b_n)

    def sign_cost(self, policy) -> float:
        if isinstance(policy, at.SessionPolicy):
            return self.session_sign_ms
        return self.sign_ms


def piece_count(file_size: int, piece_size: int) -> int:
    if file_size <= 0 or piece_size <= 0:
        raise ValueError("sizes must be positive")
    return -(-file_size // piece_size)


def throughput_overhead(file_size: int, bandwidth: float, piece_size: int,
                        policy, cost: CostModel) -> float:
    """Fractional download-time increase caused by receipt signing: the
    policy's signature count times per-op latency, relative to the transfer
    time alone."""
    n = piece_count(file_size, piece_size)
    count = at.signature_count(policy, n)
    signing_s = count * cost.sign_cost(policy) / 1000.0
    baseline_s = file_size / bandwidth
    return signing_s / baseline_s


# ---------------------------------------------------------------------------
# attestation-policy comparison for one reference torrent

TABLE1_PUBLISHED = {
    "per-piece": {"signatures": 2560, "time_s": 5.1, "report_size": "2.3 MB"},
    "adaptive": {"signatures": 512, "time_s": 1.02, "report_size": "456 KB"},
    "batch": {"signatures": 256, "time_s": 0.51, "report_size": "228 KB"},
    "session": {"signatures": 2560, "time_s": 0.53, "report_size": "160 KB"},
}


def table1(n: int = 2560, piece_size: int = 2 * MIB,
           bls_op_ms: float = 2.0, session_op_ms: float = 0.2):
    """Signature counts, combined sign+verify time, and report sizes for the
    four policies over an n-piece torrent.  Per-op latencies default to the
    published projection inputs (2 ms for the aggregatable scheme, 0.2 ms for
    session signatures).

    Report bytes follow the aggregated layout: 32 bytes per covered piece
    hash plus one 96-byte aggregate signature; the session row instead
    carries one 64-byte signature per piece plus the 96-byte certificate
    signature.  For the adaptive row the published figure assumes roughly
    n/5 signatures where the stated head/tail/stride rule gives fewer; both
    values are reported, with the source's under a ``published`` key and a
    ``note`` flagging the discrepancy.
    """
    rows = []

    count = at.signature_count(at.PerPiecePolicy(), n)
    rows.append({
        "policy": "per-piece",
        "signatures": count,
        "time_s": count * bls_op_ms / 1000.0,
        "report_bytes": 32 * count + 96,
        "published": TABLE1_PUBLISHED["per-piece"],
    })

    pol = at.AdaptivePolicy()
    count = at.signature_count(pol, n)
    rows.append({
        "policy": "adaptive",
        "signatures": count,
        "time_s": count * bls_op_ms / 1000.0,
        "report_bytes": 32 * count + 96,
        "published": TABLE1_PUBLISHED["adaptive"],
        "note": (
            "published row assumes ~%d signatures; head=%d/stride=%d/tail=%d "
            "coverage of %d pieces yields %d"
            % (TABLE1_PUBLISHED["adaptive"]["signatures"], pol.head, pol.stride, pol.tail, n, count)
        ),
    })

    count = at.signature_count(at.BatchPolicy(k=10), n)
    rows.append({
        "policy": "batch",
        "signatures": count,
        "time_s": count * bls_op_ms / 1000.0,
        "report_bytes": 32 * count + 96,
        "published": TABLE1_PUBLISHED["batch"],
    })

    count = at.signature_count(at.SessionPolicy(), n)
    # one certificate: signed once, verified once, with the long-term scheme
    rows.append({
        "policy": "session",
        "signatures": count,
        "time_s": (count * session_op_ms + 2 * bls_op_ms) / 1000.0,
        "report_bytes": 64 * count + 96,
        "published": TABLE1_PUBLISHED["session"],
    })
    return rows


# ---------------------------------------------------------------------------
# host measurements


_bench_run = itertools.count()


def bench_crypto(reps: int = 200, agg_batches=(10, 25, 50, 100), seed: int = 0) -> CostModel:
    """Measure per-op latencies on this host and return them as a CostModel.
    Every trial uses a distinct message — distinct across calls too, via a
    process-wide run tag — so memoized verification paths cannot flatter the
    numbers."""
    if reps < 100:
        raise ValueError("need at least 100 repetitions for stable means")
    rng = random.Random(seed)
    keys = [sc.keygen(rng.getrandbits(256).to_bytes(32, "big")) for _ in range(8)]
    skeys = [sc.session_keygen(rng.getrandbits(256).to_bytes(32, "big")) for _ in range(8)]
    tag = next(_bench_run)

    def msg(i: int) -> bytes:
        return b"bench-msg-%d-%d-%d" % (seed, tag, i)

    t0 = time.perf_counter()
    sigs = [sc.sign(keys[i % 8].sk, msg(i)) for i in range(reps)]
    sign_ms = (time.perf_counter() - t0) / reps * 1000.0

    n_ver = min(reps, 120)
    t0 = time.perf_counter()
    ok = all(sc.verify(keys[i % 8].pk, msg(i), sigs[i]) for i in range(n_ver))
    verify_ms = (time.perf_counter() - t0) / n_ver * 1000.0
    assert ok

    t0 = time.perf_counter()
    ssigs = [sc.session_sign(skeys[i % 8].sk, msg(i)) for i in range(reps)]
    session_sign_ms = (time.perf_counter() - t0) / reps * 1000.0

    t0 = time.perf_counter()
    ok = all(sc.session_verify(skeys[i % 8].pk, msg(i), ssigs[i]) for i in range(reps))
    session_verify_ms = (time.perf_counter() - t0) / reps * 1000.0
    assert ok

    agg_ms = {}
    for b in agg_batches:
        pairs = [(keys[i % 8].pk, msg(10_000 + 1000 * b + i)) for i in range(b)]
        batch_sigs = [sc.sign(keys[i % 8].sk, m) for i, (_, m) in enumerate(pairs)]
        agg = sc.aggregate(batch_sigs)
        t0 = time.perf_counter()
        assert sc.aggregate_verify(pairs, agg)
        agg_ms[b] = (time.perf_counter() - t0) * 1000.0

    return CostModel(
        sign_ms=sign_ms,
        verify_ms=verify_ms,
        session_sign_ms=session_sign_ms,
        session_verify_ms=session_verify_ms,
        agg_verify_ms=agg_ms,
    )


def agg_speedups(cost: CostModel) -> dict:
    """Single-verify time over aggregate-verify time, per batch size."""
    return {
        b: (cost.verify_ms * b) / ms for b, ms in sorted(cost.agg_verify_ms.items())
    }
