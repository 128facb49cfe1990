"""Benchmark the compiled kernels against their pure numpy/scipy fallbacks.

Run:  python benchmarks/bench_kernels.py
Both backends produce identical results; the table reports wall time.
"""

import time

import numpy as np

from brinklab import _fallback, kernels


def _time(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    rng = np.random.default_rng(0)
    if kernels.BACKEND != "compiled":
        print("compiled extension unavailable; nothing to compare")
        return

    from brinklab import _kernels

    print(f"{'kernel':<34}{'n':>9}{'compiled':>12}{'fallback':>12}{'speedup':>9}")

    for n in (2_000, 20_000, 100_000):
        pts = rng.random((n, 3))
        cell = kernels.nn_cell_size(pts)
        tc, rc = _time(_kernels.nn_distances, pts, cell)
        tf, rf = _time(_fallback.nn_distances, pts)
        assert np.array_equal(rc, rf)
        print(f"{'nn_distances':<34}{n:>9}{tc:>11.3f}s{tf:>11.3f}s{tf / tc:>8.1f}x")

    for n in (512, 2048, 4096):
        a, b = rng.random((n, 3)), rng.random((n, 3))
        tc, rc = _time(_kernels.auction_assignment, a, b, repeat=1)
        tf, rf = _time(_fallback.assignment, a, b, repeat=1)
        ca = ((a - b[rc]) ** 2).sum()
        cf = ((a - b[rf]) ** 2).sum()
        assert abs(ca - cf) <= 1e-9 * max(1.0, cf)
        print(f"{'assignment (squared-distance W2)':<34}{n:>9}{tc:>11.3f}s{tf:>11.3f}s{tf / tc:>8.1f}x")

    for n in (500, 2000, 8000):
        c = rng.random((n, 3))
        side = float(n) ** (-1 / 3.0) * 0.7
        tc, rc = _time(_kernels.max_cover_multiplicity, c, side, repeat=1)
        tf, rf = _time(_fallback.max_cover_multiplicity, c, side, repeat=1)
        assert rc == rf
        print(f"{'max_cover_multiplicity':<34}{n:>9}{tc:>11.3f}s{tf:>11.3f}s{tf / tc:>8.1f}x")


if __name__ == "__main__":
    main()
