#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy twins.

Run:  python benchmarks/bench_kernels.py [--repeat 200]

The numbers that matter operationally: compat scoring runs per generated
beat frame (hundreds of thousands of calls across a long jam or a
property-test sweep), sounding-pitch and monophonize run per request over
the whole history.
"""

import argparse
import time

import numpy as np

from jamloop import kernels
from jamloop.codec import CHORD_MEMBERSHIP

NUMPY_IMPLS = dict(zip(("sounding_pitch", "compat_scores", "monophonize_fill"),
                       kernels.numpy_kernels()))
ACTIVE_IMPLS = {
    "sounding_pitch": kernels.sounding_pitch,
    "compat_scores": kernels.compat_scores,
    "monophonize_fill": kernels.monophonize_fill,
}


def bench(fn, args, repeat):
    fn(*args)  # warm (JIT compile / cache touch)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat * 1e6  # us/call


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--frames", type=int, default=100_000,
                    help="history length for the per-request kernels")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    melody = rng.integers(0, 130, size=args.frames).astype(np.int16)
    pcs = rng.integers(-1, 12, size=8).astype(np.int64)
    n_ev = args.frames // 8
    on = np.sort(rng.integers(0, args.frames, size=n_ev)).astype(np.int64)
    through = on + rng.integers(1, 16, size=n_ev)
    pitches = rng.integers(0, 128, size=n_ev).astype(np.int32)

    cases = {
        "sounding_pitch": (melody,),
        "compat_scores": (pcs, CHORD_MEMBERSHIP),
        "monophonize_fill": (on, through, pitches, args.frames),
    }

    print(f"active backend: {kernels.backend_name()}   "
          f"(set JAMLOOP_NO_NUMBA=1 to force numpy)")
    print(f"{'kernel':<18} {'numpy us/call':>14} {'active us/call':>15} {'speedup':>8}")
    for name, case in cases.items():
        t_np = bench(NUMPY_IMPLS[name], case, args.repeat)
        t_active = bench(ACTIVE_IMPLS[name], case, args.repeat)
        speed = t_np / t_active if t_active > 0 else float("inf")
        print(f"{name:<18} {t_np:>14.2f} {t_active:>15.2f} {speed:>7.1f}x")


if __name__ == "__main__":
    main()
