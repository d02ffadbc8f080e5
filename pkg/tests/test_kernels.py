import os
import subprocess
import sys

import numpy as np
import pytest

from hilbert_geo import _pykernels, kernels
from hilbert_geo.manifolds import conformal_ball, flat, grossman_ellipsoid, initial_frame, random_point, random_tangent

needs_ext = pytest.mark.skipif(kernels.ckernels is None, reason="compiled extension not built")


@pytest.mark.parametrize("nsteps,stride,expect", [
    (10, 1, list(range(11))),
    (10, 3, [0, 3, 6, 9, 10]),
    (9, 3, [0, 3, 6, 9]),
    (5, 100, [0, 5]),
])
def test_stored_steps(nsteps, stride, expect):
    assert _pykernels.stored_steps(nsteps, stride) == expect


def _ls_inputs(rng, n=7, k=3):
    m = grossman_ellipsoid(n)
    x = random_point(m, rng)
    v = random_tangent(m, x, rng)
    F = initial_frame(m, x, v)
    return m, x, v, F, rng.standard_normal((n - 1, k)), rng.standard_normal((n - 1, k))


@needs_ext
def test_compiled_geodesic_matches_python(rng):
    m, x, v, *_ = _ls_inputs(rng)
    a = _pykernels.ls_geodesic(m.coeffs, x, v, 1e-2, 257, 5)
    b = kernels.ckernels.ls_geodesic(m.coeffs, x, v, 1e-2, 257, 5)
    for u, w in zip(a, b):
        np.testing.assert_allclose(u, w, rtol=0, atol=1e-13)


@needs_ext
@pytest.mark.parametrize("k", [0, 3])
def test_compiled_flow_matches_python(rng, k):
    m, x, v, F, y, yd = _ls_inputs(rng, k=k)
    a = _pykernels.ls_flow(m.coeffs, x, v, F, y, yd, 1e-2, 300, 7)
    b = kernels.ckernels.ls_flow(m.coeffs, x, v, F, y, yd, 1e-2, 300, 7)
    for u, w in zip(a, b):
        if u is None:
            assert w is None
        else:
            np.testing.assert_allclose(u, w, rtol=0, atol=1e-12)


@needs_ext
@pytest.mark.parametrize("factory", [conformal_ball, flat])
def test_compiled_chart_flow_matches_python(rng, factory):
    m = factory(5)
    x = random_point(m, rng)
    v = random_tangent(m, x, rng)
    F = initial_frame(m, x, v)
    y, yd = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
    a = _pykernels.chart_flow(m, x, v, F, y, yd, 1e-2, 200, 3)
    b = kernels.chart_flow(m, x, v, F, y, yd, 1e-2, 200, 3)
    for u, w in zip(a, b):
        np.testing.assert_allclose(u, w, rtol=0, atol=1e-12)


def test_backend_env_override():
    env = dict(os.environ, HILBERT_GEO_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import hilbert_geo.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    if kernels.ckernels is not None and os.environ.get("HILBERT_GEO_BACKEND", "auto") != "python":
        assert kernels.BACKEND == "cython"
