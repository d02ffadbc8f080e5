import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hilbert_geo import transport
from hilbert_geo.errors import BVPFailure, DomainError
from hilbert_geo.manifolds import (
    christoffel,
    conformal_ball,
    constraint_value,
    flat,
    grossman_ellipsoid,
    grossman_sphere,
    metric_inner,
    project_tangent,
    random_point,
    random_tangent,
    unit_sphere,
)
from hilbert_geo.transport import (
    IsometryDescriptor,
    displacement,
    distance_between,
    exp_map,
    geodesic_ivp,
    parallel_transport,
    path_length,
    shoot_bvp,
    time_grid,
)

from conftest import MODEL_FACTORIES, unit

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_time_grid_lands_on_end():
    n, h = time_grid(6.3, 1e-3)
    assert n == 6300 and n * h == pytest.approx(6.3, abs=1e-15)
    n, h = time_grid(math.pi, 1e-3)
    assert n == 3142 and h <= 1e-3
    assert time_grid(1e-6, 1e-3)[0] == 1
    with pytest.raises(DomainError):
        time_grid(1.0, 0.0)


def test_sphere_great_circle(rng):
    m = unit_sphere(5)
    p = random_point(m, rng)
    v = random_tangent(m, p, rng)
    path = geodesic_ivp(m, p, v, 2.5)
    t = path.times[:, None]
    np.testing.assert_allclose(path.points, np.cos(t) * p + np.sin(t) * v, atol=1e-12)
    assert path.t_end == pytest.approx(2.5, abs=1e-15)


def test_grossman_great_circle_endpoint():
    m = grossman_sphere(6)
    path = geodesic_ivp(m, unit(6, 0), unit(6, 1), math.pi / 2)
    # a_2 = 1/4: the (e_1, e_2) ellipse is traversed with semi-axis 2
    assert np.abs(constraint_value(m, path.endpoint)) < 1e-12
    np.testing.assert_allclose(path.speeds(), 1.0, atol=1e-12)


def test_flat_line_and_ball_radial():
    path = geodesic_ivp(flat(4), [1.0, 1.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], 1.0)
    np.testing.assert_allclose(path.endpoint, [2.0, 2.0, 0.0, 0.0], atol=1e-14)
    m = conformal_ball(3)
    path = geodesic_ivp(m, np.zeros(3), [0.5, 0.0, 0.0], 1.0)
    assert path.endpoint[0] == pytest.approx(math.tanh(0.5), abs=1e-13)
    assert path_length(m, path) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=seeds, name=st.sampled_from(sorted(MODEL_FACTORIES)))
def test_geodesic_invariants(seed, name):
    m = MODEL_FACTORIES[name](5)
    rng = np.random.default_rng(seed)
    p = random_point(m, rng)
    v = random_tangent(m, p, rng)
    path = geodesic_ivp(m, p, v, 2.0, step=2e-3)
    np.testing.assert_allclose(path.speeds(), 1.0, atol=1e-9)
    if m.is_level_set:
        assert max(abs(constraint_value(m, x)) for x in path.points) < 1e-12
        assert max(abs(np.dot(m.coeffs * x, w)) for x, w in zip(path.points, path.velocities)) < 1e-12
    # the frame stays orthonormal and tangent
    for x, F in zip(path.points[::100], path.frames[::100]):
        gram = np.array([[metric_inner(m, x, F[:, i], F[:, j]) for j in range(F.shape[1])]
                         for i in range(F.shape[1])])
        np.testing.assert_allclose(gram, np.eye(F.shape[1]), atol=1e-9)
        if m.is_level_set:
            np.testing.assert_allclose((m.coeffs * x) @ F, 0.0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=seeds, name=st.sampled_from(sorted(MODEL_FACTORIES)))
def test_parallel_transport_is_isometric(seed, name):
    m = MODEL_FACTORIES[name](5)
    rng = np.random.default_rng(seed)
    p = random_point(m, rng)
    v = random_tangent(m, p, rng)
    path = geodesic_ivp(m, p, v, 1.5, step=2e-3, frame=False)
    u = random_tangent(m, p, rng, unit=False)
    w = random_tangent(m, p, rng, unit=False)
    pu, pw = parallel_transport(m, path, u), parallel_transport(m, path, w)
    g0 = metric_inner(m, p, u, w)
    for x, a, b in zip(path.points[::50], pu[::50], pw[::50]):
        assert metric_inner(m, x, a, b) == pytest.approx(g0, abs=1e-9)
    # the velocity is parallel along its own geodesic
    pv = parallel_transport(m, path, v)
    np.testing.assert_allclose(pv, path.velocities, atol=1e-9)


def _covariant_derivative_fd(m, path, W, j):
    """Finite-difference covariant derivative of a field ``W`` sampled on the path grid."""
    h = path.times[j + 1] - path.times[j]
    dW = (W[j + 1] - W[j - 1]) / (2 * h)
    x = path.points[j]
    if m.is_level_set:
        return project_tangent(m, x, dW)
    return dW + np.einsum("kij,i,j->k", christoffel(m, x), path.velocities[j], W[j])


@pytest.mark.parametrize("name", ["unit_sphere", "grossman_ellipsoid", "conformal_ball"])
def test_transported_curve_derivative(rng, name):
    """D/dt of P_{0,t} V(t) equals P_{0,t} V'(t) for a curve V(t) in T_pM."""
    m = MODEL_FACTORIES[name](5)
    p = random_point(m, rng)
    path = geodesic_ivp(m, p, random_tangent(m, p, rng), 1.0, step=1e-3)
    n = path.frames.shape[2]
    a, b = rng.standard_normal(n), rng.standard_normal(n)
    t = path.times
    coeff = np.sin(2 * t)[:, None] * a + (t ** 2)[:, None] * b
    dcoeff = 2 * np.cos(2 * t)[:, None] * a + 2 * t[:, None] * b
    W = np.einsum("tij,tj->ti", path.frames, coeff)
    for j in (100, 500, 900):
        lhs = _covariant_derivative_fd(m, path, W, j)
        np.testing.assert_allclose(lhs, path.frames[j] @ dcoeff[j], atol=1e-5)


def test_exp_map_first_order(rng):
    m = grossman_ellipsoid(6)
    p = random_point(m, rng)
    v = random_tangent(m, p, rng)
    errs = [np.linalg.norm(exp_map(m, p, eps * v, step=1e-4) - p - eps * v) for eps in (1e-2, 1e-3)]
    assert math.log10(errs[0] / errs[1]) >= 1.9
    np.testing.assert_array_equal(exp_map(m, p, np.zeros(6)), p)


def test_rk4_order():
    m = unit_sphere(4)
    p, v = unit(4, 0), 8.0 * unit(4, 1)
    exact = np.cos(8.0 * 6.0) * p + np.sin(8.0 * 6.0) * unit(4, 1)
    errs = [np.linalg.norm(geodesic_ivp(m, p, v, 6.0, step=h, frame=False).endpoint - exact)
            for h in (4e-3, 2e-3, 1e-3)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 3.7


def test_dense_output_thinning(monkeypatch):
    monkeypatch.setattr(transport, "MAX_STORED_FLOATS", 2000)
    m = unit_sphere(4)
    path = geodesic_ivp(m, unit(4, 0), unit(4, 1), 1.0)
    assert path.stride > 1
    assert path.times[-1] == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(path.times[1] - path.times[0], path.stride * path.step)


def test_geodesic_rejects_bad_input():
    m = unit_sphere(3)
    with pytest.raises(DomainError):
        geodesic_ivp(m, unit(3, 0), unit(3, 0), 1.0)
    with pytest.raises(DomainError):
        geodesic_ivp(m, unit(3, 0), unit(3, 1), -1.0)


# -- shooting ------------------------------------------------------------------------


@pytest.mark.parametrize("jac", ["fd", "jacobi"])
def test_shoot_sphere_quarter_circle(jac):
    m = unit_sphere(5)
    path = shoot_bvp(m, unit(5, 0), unit(5, 1), jacobian=jac)
    np.testing.assert_allclose(path.endpoint, unit(5, 1), atol=1e-8)
    assert path_length(m, path) == pytest.approx(math.pi / 2, abs=1e-9)


def test_shoot_ball_matches_hyperbolic_distance():
    m = conformal_ball(3)
    q = np.array([0.2, -0.15, 0.1])
    assert distance_between(m, np.zeros(3), q) == pytest.approx(2 * math.atanh(np.linalg.norm(q)),
                                                               abs=1e-7)


def test_shoot_random_points_hits_target(rng):
    m = grossman_ellipsoid(5)
    p, q = random_point(m, rng), random_point(m, rng)
    path = shoot_bvp(m, p, q)
    np.testing.assert_allclose(exp_map(m, p, path.initial_velocity, step=path.step), q, atol=1e-8)


def test_shoot_identical_points():
    m = unit_sphere(3)
    assert distance_between(m, unit(3, 0), unit(3, 0)) == 0.0
    assert path_length(m, shoot_bvp(m, unit(3, 0), unit(3, 0))) == 0.0


def test_shoot_failure_raises():
    m = unit_sphere(3)
    with pytest.raises(BVPFailure):
        shoot_bvp(m, unit(3, 0), unit(3, 1), max_iter=0)
    with pytest.raises(ValueError):
        shoot_bvp(m, unit(3, 0), unit(3, 1), jacobian="broyden")


def test_grossman_antipode_distance_above_pi():
    d = distance_between(grossman_sphere(8), unit(8, 0), -unit(8, 0))
    assert math.pi < d < 3.4


# -- isometries ------------------------------------------------------------------------


def test_isometry_preservation():
    rot = IsometryDescriptor.plane_rotation(1, 2, 0.3)
    assert rot.preserves(unit_sphere(4))
    assert not rot.preserves(grossman_sphere(4))
    assert IsometryDescriptor.sign_flip([2, 3]).preserves(grossman_sphere(4))
    assert not IsometryDescriptor.sign_flip([5]).preserves(grossman_sphere(4))
    assert IsometryDescriptor.translation([1.0, 0.0]).preserves(flat(2))
    assert not IsometryDescriptor.translation([1.0, 0.0]).preserves(conformal_ball(2))
    with pytest.raises(DomainError):
        IsometryDescriptor.plane_rotation(2, 2, 1.0)
    with pytest.raises(DomainError):
        displacement(grossman_sphere(4), rot, unit(4, 0))


def test_isometry_apply():
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(IsometryDescriptor.sign_flip([1, 3]).apply(x), [-1.0, 2.0, -3.0])
    np.testing.assert_allclose(IsometryDescriptor.plane_rotation(1, 2, math.pi / 2).apply(x),
                               [-2.0, 1.0, 3.0], atol=1e-15)
    np.testing.assert_allclose(IsometryDescriptor.antipodal().apply(x), -x)


def test_displacements(rng):
    m = unit_sphere(5)
    anti = IsometryDescriptor.antipodal()
    for _ in range(3):
        assert displacement(m, anti, random_point(m, rng)) == pytest.approx(math.pi, abs=1e-7)
    rot = IsometryDescriptor.plane_rotation(1, 2, math.pi / 3)
    assert displacement(m, rot, unit(5, 0)) == pytest.approx(math.pi / 3, abs=1e-7)
    assert displacement(m, rot, unit(5, 2)) == 0.0
    shift = IsometryDescriptor.translation([3.0, 4.0])
    assert displacement(flat(2), shift, [0.5, -1.0]) == pytest.approx(5.0, abs=1e-9)


# -- worked examples -------------------------------------------------------------------


def test_ivp_examples():
    m = unit_sphere(8)
    np.testing.assert_allclose(geodesic_ivp(m, unit(8, 0), unit(8, 1), math.pi).endpoint,
                               -unit(8, 0), atol=1e-8)
    g = grossman_ellipsoid(8)
    path = geodesic_ivp(g, unit(8, 0), unit(8, 1), math.pi / 2)
    np.testing.assert_allclose(path.endpoint, unit(8, 1), atol=1e-10)
    np.testing.assert_allclose(path.end_velocity, -unit(8, 0), atol=1e-10)
    path = geodesic_ivp(flat(4), np.zeros(4), [1.0, 1.0, 0.0, 0.0], 2.0)
    np.testing.assert_allclose(path.endpoint, [2.0, 2.0, 0.0, 0.0], atol=1e-14)


def test_transport_examples():
    m = unit_sphere(4)
    path = geodesic_ivp(m, unit(4, 0), unit(4, 1), 2 * math.pi, frame=False)
    np.testing.assert_allclose(parallel_transport(m, path, unit(4, 2)),
                               np.broadcast_to(unit(4, 2), (len(path.times), 4)), atol=1e-12)
    g = grossman_ellipsoid(16)
    path = geodesic_ivp(g, unit(16, 0), unit(16, 1), 4.0, frame=False)
    for k in (3, 10, 16):
        u = parallel_transport(g, path, unit(16, k - 1))
        np.testing.assert_allclose(u, np.broadcast_to(unit(16, k - 1), u.shape), atol=1e-12)


def test_transport_rejects_foreign_path():
    m = unit_sphere(3)
    path = geodesic_ivp(m, unit(3, 0), unit(3, 1), 1.0)
    with pytest.raises(DomainError):
        parallel_transport(unit_sphere(3), path, unit(3, 2))


def test_length_examples():
    m = unit_sphere(4)
    assert path_length(m, geodesic_ivp(m, unit(4, 0), unit(4, 1), math.pi)) == pytest.approx(math.pi, abs=1e-8)
    f = flat(3)
    assert path_length(f, geodesic_ivp(f, np.zeros(3), unit(3, 0), 3.0)) == pytest.approx(3.0, abs=1e-12)


def test_shoot_examples():
    g = grossman_sphere(8)
    path = shoot_bvp(g, unit(8, 0), -unit(8, 0))
    assert path_length(g, path) == pytest.approx(3.3697, abs=1e-3)
    # the minimiser lives in the (e_1, e_8) plane
    assert np.abs(path.points[:, 1:7]).max() < 1e-8
    f = flat(4)
    assert distance_between(f, np.zeros(4), [1.0, 1.0, 0.0, 0.0]) == pytest.approx(math.sqrt(2), abs=1e-10)
    assert distance_between(unit_sphere(8), unit(8, 0), -unit(8, 0)) == pytest.approx(math.pi, abs=1e-6)


def test_distance_symmetry_and_triangle(rng):
    m = grossman_ellipsoid(5)
    p, q, r = (random_point(m, rng) for _ in range(3))
    d_pq, d_qp = distance_between(m, p, q), distance_between(m, q, p)
    assert d_pq == pytest.approx(d_qp, abs=1e-6)
    assert d_pq <= distance_between(m, p, r) + distance_between(m, r, q) + 1e-6


@pytest.mark.parametrize("k", [2, 4, 8])
def test_grossman_plane_geodesics_reach_antipode(k):
    """Each coordinate plane (e_1, e_k) carries a geodesic from e_1 to -e_1 of half-ellipse length."""
    from hilbert_geo.experiments.scenarios import ellipse_half_perimeter

    m = grossman_sphere(8)
    half = ellipse_half_perimeter(1.0 / math.sqrt(m.coeffs[k - 1]))
    path = geodesic_ivp(m, unit(8, 0), unit(8, k - 1), half, step=1e-3)
    np.testing.assert_allclose(path.endpoint, -unit(8, 0), atol=1e-8)
