"""Compare the compiled RK4 kernels with the numpy reference implementation.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--steps 3142] [--dims 8,16,64]

Each row times one full integration (best of ``--repeat``) and reports the
speed-up and the largest absolute difference between the two backends.
"""

import argparse
import sys
import time

import numpy as np

from hilbert_geo import _pykernels, kernels
from hilbert_geo.manifolds import conformal_ball, grossman_ellipsoid, initial_frame, random_point, random_tangent


def best_time(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def max_diff(a, b):
    return max(float(np.abs(u - w).max()) for u, w in zip(a, b) if u is not None)


def cases(dims, steps, rng):
    h = np.pi / steps
    for n in dims:
        m = grossman_ellipsoid(n)
        x = random_point(m, rng)
        v = random_tangent(m, x, rng)
        F = initial_frame(m, x, v)
        k = n - 1
        y0, yd0 = np.zeros((k, k)), np.eye(k)
        yield (f"geodesic   N={n}",
               lambda: _pykernels.ls_geodesic(m.coeffs, x, v, h, steps, 1),
               lambda: kernels.ckernels.ls_geodesic(m.coeffs, x, v, h, steps, 1))
        yield (f"jacobi     N={n}",
               lambda: _pykernels.ls_flow(m.coeffs, x, v, F, y0, yd0, h, steps, 1),
               lambda: kernels.ckernels.ls_flow(m.coeffs, x, v, F, y0, yd0, h, steps, 1))
    for n in dims[:2]:
        m = conformal_ball(n)
        x = random_point(m, rng)
        v = random_tangent(m, x, rng)
        F = initial_frame(m, x, v)
        y0, yd0 = np.zeros((n, n)), np.eye(n)
        yield (f"ball flow  N={n}",
               lambda: _pykernels.chart_flow(m, x, v, F, y0, yd0, h, steps, 1),
               lambda: kernels.chart_flow(m, x, v, F, y0, yd0, h, steps, 1))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--steps", type=int, default=3142)
    ap.add_argument("--dims", default="8,16,64")
    args = ap.parse_args(argv)
    if kernels.ckernels is None:
        print("compiled extension is not available; build with `pip install -e .`", file=sys.stderr)
        return 1
    dims = [int(s) for s in args.dims.split(",")]
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'python [s]':>12}{'compiled [s]':>14}{'speed-up':>10}{'max |diff|':>12}")
    for label, py, cy in cases(dims, args.steps, rng):
        t_py, out_py = best_time(py, args.repeat)
        t_cy, out_cy = best_time(cy, args.repeat)
        print(f"{label:<18}{t_py:>12.4f}{t_cy:>14.4f}{t_py / t_cy:>9.1f}x{max_diff(out_py, out_cy):>12.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
