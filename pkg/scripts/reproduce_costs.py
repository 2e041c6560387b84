#!/usr/bin/env python3
"""Print the policy cost table and overhead projections with the reference
latencies, then re-measure every latency on this host for comparison."""

import argparse

from pbts import attestation as at
from pbts.sim import costs as C


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=200, help="benchmark repetitions")
    args = ap.parse_args()

    print("== policy comparison (reference latencies: 2.0 / 0.2 ms per op) ==")
    for row in C.table1():
        pub = row["published"]
        print(f"{row['policy']:<10} {row['signatures']:>5} sigs  {row['time_s']:>6.2f}s  "
              f"{row['report_bytes']:>8d}B   (published: {pub['signatures']} sigs, "
              f"{pub['time_s']}s, {pub['report_size']})")
        if "note" in row:
            print(f"           {row['note']}")

    print("\n== per-piece signing overhead, 1 GiB at 1 MiB/s ==")
    cm = C.CostModel()
    for piece in (256 * 1024, 2 * C.MIB):
        frac = C.throughput_overhead(C.GIB, float(C.MIB), piece, at.PerPiecePolicy(), cm)
        print(f"piece {piece:>8d}B: +{100 * frac:5.1f}%")

    print(f"\n== this host ({args.reps} reps) ==")
    here = C.bench_crypto(reps=args.reps)
    print(f"sign   {here.sign_ms:8.3f} ms   (reference {C.REF_SIGN_MS})")
    print(f"verify {here.verify_ms:8.3f} ms   (reference {C.REF_VERIFY_MS})")
    print(f"session sign   {here.session_sign_ms:8.3f} ms")
    print(f"session verify {here.session_verify_ms:8.3f} ms")
    for b, speed in C.agg_speedups(here).items():
        print(f"aggregate n={b:<4d} speedup {speed:4.2f}x "
              f"({here.agg_verify_ms[b]:7.1f} ms total)")


if __name__ == "__main__":
    main()
