"""Compiled kernels versus the NumPy fallback on the hot loops.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. Each kernel is
timed on both backends with identical inputs, and the largest absolute
difference between their outputs is reported next to the speedup.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qclmi import _fallback

try:
    from qclmi import _kernels
except ImportError:  # pragma: no cover - depends on the build
    _kernels = None

NELSON = np.array([0.1, 2.0, 0.0, 0.0, 1.0])


def _best(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _diff(a, b):
    if isinstance(a, tuple):
        return max(_diff(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    both = np.isfinite(a) & np.isfinite(b)
    return float(np.max(abs(a[both] - b[both]), initial=0.0))


def cases(n_grid=24, n_points=2000):
    rng = np.random.default_rng(0)
    A = np.linalg.qr(rng.normal(size=(4, 4)))[0].copy()
    b = 0.1 * rng.normal(size=4)
    axes = [np.linspace(-2.0, 2.0, n_grid) for _ in range(4)]
    ws = [np.full(n_grid, ax[1] - ax[0]) for ax in axes]
    kinds = np.array([0, 1], dtype=np.intc)
    c = np.array([0.1, 0.2, 0.0, 0.0])
    X = rng.normal(size=(n_grid**4, 4))
    cloud = 0.3 * rng.normal(size=(n_points, 4))
    seeds = np.array([[0.0, np.sqrt(0.1), 0.0, 0.0], [0.0, 0.3, 0.1, 0.05]])

    def grid(k):
        return lambda: k.linear_grid_moments(A, b, *axes, *ws, kinds, c, 0.3)

    def points(k):
        return lambda: k.points_grid_moments(X, n_grid, n_grid, n_grid, n_grid, *ws, kinds, c, 0.3)

    def rk4(k):
        def run():
            Y = cloud.copy()
            k.rk4_advance(Y, 0.01, 200, NELSON, 5.0)
            return Y

        return run

    def section(k):
        return lambda: k.section_crossings(seeds, 0.01, 100000, 20, NELSON, 5.0)[:2]

    return {
        f"linear_grid_moments ({n_grid}^4 nodes)": grid,
        f"points_grid_moments ({n_grid}^4 nodes)": points,
        f"rk4_advance ({n_points} points x 200 steps)": rk4,
        "section_crossings (2 seeds x 20 crossings)": section,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--grid", type=int, default=24)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; run `python3 setup.py build_ext --inplace`")
        return 1
    print(f"{'kernel':<46}{'cython [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max |diff|':>13}")
    for name, make in cases(args.grid).items():
        tc, oc = _best(make(_kernels), args.repeat)
        tp, op = _best(make(_fallback), 1 if "section" in name else args.repeat)
        print(f"{name:<46}{tc:>12.4f}{tp:>12.4f}{tp / tc:>10.1f}{_diff(oc, op):>13.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
