"""Time the compiled kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

The first numba call compiles (or loads from cache) and is excluded.
"""

import argparse
import time

import numpy as np

from wavepacket_lab import _accel


def _tube_box_args(rng, P=200_000, d=2):
    p = rng.normal(size=(P, d)) * 5
    v = rng.normal(size=(P, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    ta = rng.uniform(0, 4, P)
    tb = ta + rng.uniform(0, 8, P)
    lo = np.column_stack([rng.uniform(0, 10, P), rng.normal(size=(P, d)) * 5])
    hi = lo + rng.uniform(0.5, 3, (P, d + 1))
    return p, v, ta, tb, lo, hi


def _shell_args(rng, npts=20_000, T=40, A=27):
    pts = rng.uniform(-20, 20, (npts, 2))
    return pts, rng.random((T, npts)), np.full(T, 0.1), np.linspace(0, 4, T), rng.uniform(0, 4, A), \
        rng.uniform(-4, 4, (A, 2)), 1.0


def _corner_args(rng, d=2, n=256, K=40, Lc=9, P=50_000):
    return (rng.normal(size=(Lc, P)) + 1j * rng.normal(size=(Lc, P)), rng.integers(0, n**d, P),
            rng.integers(0, K - 1, n), rng.random((2, n)),
            rng.normal(size=(Lc, K**d)) + 1j * rng.normal(size=(Lc, K**d)), 0, K, d, n)


def _best(fn, repeat):
    out = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t)
    return min(out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = {
        "tube_box_min_dist2": (_accel.tube_box_min_dist2, _tube_box_args(rng)),
        "shell_integrals": (_accel.shell_integrals, _shell_args(rng)),
        "corner_accumulate": (_accel.corner_accumulate, _corner_args(rng)),
    }
    print(f"{'kernel':<22}{'numpy s':>10}{'numba s':>10}{'speedup':>9}")
    for name, (fn, a) in cases.items():
        fn(*a, backend="numba")
        tn = _best(lambda: fn(*a, backend="numpy"), args.repeat)
        tb = _best(lambda: fn(*a, backend="numba"), args.repeat)
        print(f"{name:<22}{tn:>10.4f}{tb:>10.4f}{tn / tb:>8.1f}x")


if __name__ == "__main__":
    main()
