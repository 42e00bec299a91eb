"""Compare the compiled kernels against the pure-Python fallback.

Usage:  python benchmarks/bench_kernels.py [--quick]

The same workloads run through both implementations; outputs are checked
for exact equality before timings are reported.
"""

import argparse
import time

import numpy as np

from sandlab import _kernels_py

try:
    from sandlab import _kernels
except ImportError:
    _kernels = None


def _time(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return time.perf_counter() - t0, out


def bench_stabilize_1d(rho, radius, seed):
    rng = np.random.default_rng(seed)
    size = 2 * radius + 1
    h = np.zeros(size + 2, dtype=np.int64)
    h[1:-1] = rng.poisson(rho, size)
    budget = 10**10

    tc = np.zeros_like(h)
    dt_c, rc = _time(_kernels.stabilize_padded_1d, h.copy(), tc, budget)
    tp = np.zeros_like(h)
    dt_p, rp = _time(_kernels_py.stabilize_padded_1d, h.copy(), tp, budget)
    assert rc == rp and np.array_equal(tc, tp)
    return f"stabilize d=1 rho={rho} radius={radius}", rc[0], dt_c, dt_p


def bench_stabilize_2d(rho, radius, seed):
    rng = np.random.default_rng(seed)
    size = 2 * radius + 1
    h = np.zeros((size + 2, size + 2), dtype=np.int64)
    h[1:-1, 1:-1] = rng.poisson(rho, (size, size))
    budget = 10**10

    tc = np.zeros_like(h)
    dt_c, rc = _time(_kernels.stabilize_padded_2d, h.copy(), tc, budget)
    tp = np.zeros_like(h)
    dt_p, rp = _time(_kernels_py.stabilize_padded_2d, h.copy(), tp, budget)
    assert rc == rp and np.array_equal(tc, tp)
    return f"stabilize d=2 rho={rho} radius={radius}", rc[0], dt_c, dt_p


def bench_onesided(rho, n_max, seed):
    rng = np.random.default_rng(seed)
    samples = rng.poisson(rho, n_max + 1).astype(np.int64)
    dt_c, out_c = _time(_kernels.onesided_run, samples, True)
    dt_p, out_p = _time(_kernels_py.onesided_run, samples, True)
    assert np.array_equal(out_c[0], out_p[0])
    assert np.array_equal(out_c[8], out_p[8])
    topplings = int(out_p[8].sum())
    return f"one-sided rho={rho} n_max={n_max}", topplings, dt_c, dt_p


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    args = parser.parse_args()

    if _kernels is None:
        raise SystemExit("compiled kernels not built; nothing to compare")

    q = args.quick
    cases = [
        bench_stabilize_1d(0.9, 2000 if q else 20000, 1),
        bench_stabilize_1d(1.2, 500 if q else 2000, 2),
        bench_stabilize_2d(3.2, 30 if q else 80, 3),
        bench_onesided(1.0, 2000 if q else 20000, 4),
    ]

    print(f"{'workload':<42} {'topplings':>12} {'compiled':>10} {'python':>10} {'ratio':>7}")
    for name, work, dt_c, dt_p in cases:
        ratio = dt_p / dt_c if dt_c > 0 else float("inf")
        print(f"{name:<42} {work:>12} {dt_c:>9.4f}s {dt_p:>9.4f}s {ratio:>6.1f}x")


if __name__ == "__main__":
    main()
