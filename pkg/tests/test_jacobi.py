import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hilbert_geo.errors import DomainError
from hilbert_geo.jacobi import (
    SING_TOL,
    ambrose_drift,
    constant_curvature_closed_form,
    curvature_frame,
    fredholm_residual,
    jacobi_flow,
    lagrangian_residual,
    omega_defect,
    scan_conjugate,
    sigma_min_at,
    symplectic_flow,
    symplectic_form,
    transpose_residual,
)
from hilbert_geo.manifolds import (
    conformal_ball,
    flat,
    grossman_ellipsoid,
    random_point,
    random_tangent,
    unit_sphere,
)
from hilbert_geo.transport import geodesic_ivp

from conftest import MODEL_FACTORIES, unit

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def great_circle(m, t_end, step=1e-3):
    n = m.dim
    return geodesic_ivp(m, unit(n, 0), unit(n, 1), t_end, step=step)


def random_geodesic(m, rng, t_end, step=1e-3):
    p = random_point(m, rng)
    return geodesic_ivp(m, p, random_tangent(m, p, rng), t_end, step=step)


@pytest.fixture(scope="module")
def ellipsoid16_flow():
    m = grossman_ellipsoid(16)
    return jacobi_flow(m, great_circle(m, 5.0))


# -- flow structure -------------------------------------------------------------------


def test_initial_conditions_exact(model, rng):
    flow = jacobi_flow(model, random_geodesic(model, rng, 1.0))
    n = model.tangent_dim
    assert flow.T.shape[1:] == (n, n)
    assert np.array_equal(flow.T[0], np.zeros((n, n)))
    assert np.array_equal(flow.Tdot[0], np.eye(n))
    assert np.abs(flow.R_frame - np.swapaxes(flow.R_frame, 1, 2)).max() <= 1e-9


def test_curvature_frame_examples():
    m = unit_sphere(6)
    R = curvature_frame(m, great_circle(m, 2.0))
    expect = np.eye(5)
    expect[0, 0] = 0.0
    np.testing.assert_allclose(R, np.broadcast_to(expect, R.shape), atol=1e-12)

    f = flat(4)
    assert np.all(curvature_frame(f, geodesic_ivp(f, np.zeros(4), unit(4, 2), 1.0)) == 0.0)

    g = grossman_ellipsoid(16)
    R = curvature_frame(g, great_circle(g, 3.0))
    diag = np.array([0.0] + [(1 - 1 / k) ** 2 for k in range(3, 17)])
    np.testing.assert_allclose(R, np.broadcast_to(np.diag(diag), R.shape), atol=1e-12)


def test_curvature_frame_needs_frame():
    m = unit_sphere(3)
    with pytest.raises(DomainError):
        curvature_frame(m, geodesic_ivp(m, unit(3, 0), unit(3, 1), 1.0, frame=False))


@pytest.mark.parametrize("k0,factory", [(1.0, unit_sphere), (0.0, flat), (-1.0, conformal_ball)])
def test_constant_curvature_closed_forms(rng, k0, factory):
    m = factory(6)
    flow = jacobi_flow(m, random_geodesic(m, rng, 3.0))
    n = m.tangent_dim
    ref = np.zeros_like(flow.T)
    ref[:, 0, 0] = flow.times
    d = np.arange(1, n)
    ref[:, d, d] = constant_curvature_closed_form(k0, flow.times)[:, None]
    assert np.abs(flow.T - ref).max() <= 1e-6


def test_closed_form_scaling():
    t = np.linspace(0, 2, 5)
    np.testing.assert_allclose(constant_curvature_closed_form(4.0, t, speed=0.5), np.sin(t))
    np.testing.assert_allclose(constant_curvature_closed_form(0.0, t), t)
    np.testing.assert_allclose(constant_curvature_closed_form(-1.0, t), np.sinh(t))


def test_ellipsoid_diagonal_entries(ellipsoid16_flow):
    flow = ellipsoid16_flow
    for k in (3, 9, 16):
        c = 1 - 1 / k
        np.testing.assert_allclose(flow.T[:, k - 2, k - 2], np.sin(c * flow.times) / c, atol=1e-9)
    np.testing.assert_allclose(flow.T[:, 0, 0], flow.times, atol=1e-9)


def test_state_at_matches_direct_integration():
    m = grossman_ellipsoid(6)
    flow = jacobi_flow(m, great_circle(m, 2.0, step=1e-2))
    t = 1.2345
    direct = jacobi_flow(m, great_circle(m, 2.0, step=1e-2), t_end=t)
    np.testing.assert_allclose(flow.T_at(t), direct.T[-1], atol=1e-9)
    with pytest.raises(DomainError):
        flow.T_at(2.5)


# -- conjugate instants --------------------------------------------------------------


def test_sphere_single_instant():
    m = unit_sphere(8)
    report = scan_conjugate(jacobi_flow(m, great_circle(m, 4.0)))
    assert len(report.instants) == 1
    c = report.instants[0]
    assert c.t == pytest.approx(math.pi, abs=1e-5)
    # the 6 directions normal to the velocity collapse; the velocity direction does not
    assert c.multiplicity == 6
    assert c.kind == "both"


def test_sphere_second_instant_at_two_pi():
    m = unit_sphere(4)
    report = scan_conjugate(jacobi_flow(m, great_circle(m, 6.5)))
    np.testing.assert_allclose(report.times, [math.pi, 2 * math.pi], atol=1e-6)


@pytest.mark.parametrize("factory,t_end", [(flat, 10.0), (conformal_ball, 4.0)])
def test_no_instants_without_positive_curvature(rng, factory, t_end):
    m = factory(5)
    flow = jacobi_flow(m, random_geodesic(m, rng, t_end, step=2e-3))
    report = scan_conjugate(flow)
    assert report.instants == []
    assert np.all(report.sigma_min_profile[1][1:] > 0)


def test_sphere_conjugate_free_window():
    m = unit_sphere(6)
    flow = jacobi_flow(m, great_circle(m, math.pi - 1e-3))
    assert np.all(np.array([np.linalg.svd(T, compute_uv=False)[-1] for T in flow.T[1:]]) > 0)
    assert np.all(scan_conjugate(flow).sigma_min_profile[1][1:] > 1e-4)


def test_grossman_accumulation(ellipsoid16_flow):
    report = scan_conjugate(ellipsoid16_flow)
    expect = sorted(k * math.pi / (k - 1) for k in range(3, 17))
    assert len(report.instants) == 14
    np.testing.assert_allclose(report.times, expect, atol=1e-4)
    assert all(c.multiplicity == 1 and c.kind == "both" for c in report.instants)
    assert report.times == sorted(report.times)
    # the instants crowd towards pi: consecutive gaps shrink
    gaps = np.diff(report.times)
    assert np.all(np.diff(gaps) > 0)
    for c in report.instants:
        assert sigma_min_at(ellipsoid16_flow, c.t) <= SING_TOL
    # det T changes sign once per simple instant
    assert len(report.det_sign_changes) == 14


def test_exponent_four_instants():
    m = grossman_ellipsoid(8, exponent=4)
    report = scan_conjugate(jacobi_flow(m, great_circle(m, 7.5)))
    expect = sorted(math.pi / (1 - 1 / k) ** 2 for k in range(3, 9))
    np.testing.assert_allclose(report.times, expect, atol=1e-6)


@pytest.mark.parametrize("n,expect", [(8, 0.43735), (16, 0.20810)])
def test_sigma_min_at_pi(n, expect):
    m = grossman_ellipsoid(n)
    flow = jacobi_flow(m, great_circle(m, math.pi))
    assert sigma_min_at(flow, math.pi) == pytest.approx(expect, abs=1e-4)
    assert sigma_min_at(flow, math.pi) == pytest.approx(n * math.sin(math.pi / n) / (n - 1), abs=1e-10)
    assert np.linalg.det(flow.T[-1]) > 0


def test_sigma_min_sphere_quarter():
    m = unit_sphere(8)
    flow = jacobi_flow(m, great_circle(m, 2.0))
    assert sigma_min_at(flow, math.pi / 2) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(DomainError):
        sigma_min_at(flow, 3.0)


# -- symplectic structure ---------------------------------------------------------------


def test_psi_examples():
    m = unit_sphere(4)
    sflow = symplectic_flow(m, great_circle(m, 2.0))
    np.testing.assert_array_equal(sflow.Psi[0], np.eye(6))
    w = np.zeros(3)
    w[1] = 1.0  # frame direction normal to the velocity
    out = sflow.Psi_at(math.pi / 2) @ np.concatenate([np.zeros(3), w])
    np.testing.assert_allclose(out, np.concatenate([w, np.zeros(3)]), atol=1e-10)

    f = flat(3)
    sflow = symplectic_flow(f, geodesic_ivp(f, np.zeros(3), unit(3, 0), 2.0))
    w = np.array([0.3, -1.0, 2.0])
    np.testing.assert_allclose(sflow.Psi[-1] @ np.concatenate([np.zeros(3), w]),
                               np.concatenate([2 * w, w]), atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=seeds, name=st.sampled_from(sorted(MODEL_FACTORIES)))
def test_omega_preserved(seed, name):
    m = MODEL_FACTORIES[name](5)
    rng = np.random.default_rng(seed)
    sflow = symplectic_flow(m, random_geodesic(m, rng, 2.0, step=2e-3))
    n2 = sflow.Psi.shape[1]
    u, v = rng.standard_normal(n2), rng.standard_normal(n2)
    w0 = symplectic_form(u, v)
    for P in sflow.Psi[::200]:
        assert abs(symplectic_form(P @ u, P @ v) - w0) <= 1e-6 * (1 + abs(w0))
    assert omega_defect(sflow) <= 1e-6


def test_lagrangian_examples():
    f = flat(4)
    sflow = symplectic_flow(f, geodesic_ivp(f, np.zeros(4), unit(4, 1), 3.0))
    assert lagrangian_residual(sflow, 2.2) <= 1e-10
    m = unit_sphere(6)
    assert lagrangian_residual(symplectic_flow(m, great_circle(m, 1.5)), 1.0) <= 1e-8
    g = grossman_ellipsoid(8)
    assert lagrangian_residual(symplectic_flow(g, great_circle(g, math.pi)), math.pi) <= 1e-8


def test_ambrose_examples(rng):
    m = unit_sphere(4)
    path = great_circle(m, 3.0)
    w = unit(4, 2)
    zero = np.zeros(4)
    assert ambrose_drift(m, path, (zero, w), (w, zero)) <= 1e-8
    x, y = random_tangent(m, unit(4, 0), rng), random_tangent(m, unit(4, 0), rng)
    assert ambrose_drift(m, path, (x, y), (x, y)) == pytest.approx(0.0, abs=1e-14)

    g = grossman_ellipsoid(16)
    path = random_geodesic(g, rng, 4.0)
    p = path.start
    inits = [(random_tangent(g, p, rng, unit=False), random_tangent(g, p, rng, unit=False))
             for _ in range(2)]
    assert ambrose_drift(g, path, *inits) <= 1e-7


def test_transpose_examples(rng):
    m = unit_sphere(6)
    assert transpose_residual(m, great_circle(m, 2.0), 1.0) <= 1e-7
    f = flat(4)
    assert transpose_residual(f, geodesic_ivp(f, np.zeros(4), unit(4, 0), 3.0), 2.0) <= 1e-12
    g = grossman_ellipsoid(12)
    assert transpose_residual(g, random_geodesic(g, rng, 3.0), 2.5) <= 1e-6
    with pytest.raises(DomainError):
        transpose_residual(m, great_circle(m, 2.0), 2.5)


def test_fredholm_examples(ellipsoid16_flow):
    f = flat(5)
    flow = jacobi_flow(f, geodesic_ivp(f, np.zeros(5), unit(5, 3), 3.0))
    assert fredholm_residual(flow, 2.0) <= 1e-12
    m = unit_sphere(6)
    flow = jacobi_flow(m, great_circle(m, 3.0))
    assert fredholm_residual(flow, 2.0) <= 1e-5
    assert fredholm_residual(flow, 2.0005) <= 1e-5  # off-grid instant
    assert fredholm_residual(ellipsoid16_flow, math.pi) <= 1e-5
    with pytest.raises(DomainError):
        fredholm_residual(flow, 4.0)
