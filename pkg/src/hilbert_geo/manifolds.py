"""Truncated manifold models and their pointwise Riemannian geometry.

Two families are supported:

* level sets ``{x in R^N : sum_i a_i x_i^2 = 1}`` with the metric induced from
  the ambient Euclidean space (unit sphere, Grossman sphere and ellipsoid), and
* chart models ``(R^N or a ball, lambda(x)^2 <.,.>)``: the flat space and the
  conformal (Poincare-type) ball of constant curvature ``K0 < 0``.

The curvature sign convention is ``R(x, y)z = nabla_x nabla_y z - nabla_y nabla_x z
- nabla_[x,y] z``, so that the unit sphere has sectional curvature +1 and the
Jacobi equation reads ``J'' + R(J, gamma') gamma' = 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePlaneError, DomainError, UnsupportedOperationError

CONSTRAINT_TOL = 1e-9
TANGENCY_TOL = 1e-9
FD_STEP = 1e-5


class ModelKind(enum.Enum):
    LEVEL_SET = "LevelSetEllipsoid"
    FLAT = "Flat"
    CONFORMAL_BALL = "ConformalBall"


@dataclass(frozen=True, eq=False)
class ManifoldModel:
    """Immutable descriptor of a manifold truncated to ``dim`` coordinates."""

    kind: ModelKind
    dim: int
    coeffs: np.ndarray | None = None
    curvature_param: float | None = None
    name: str = ""
    constraint_tol: float = CONSTRAINT_TOL
    tangency_tol: float = TANGENCY_TOL

    def __post_init__(self):
        if self.dim < 2:
            raise DomainError(f"dimension must be >= 2, got {self.dim}")
        if self.kind is ModelKind.LEVEL_SET:
            if self.coeffs is None:
                raise DomainError("level-set model needs coefficients")
            a = np.array(self.coeffs, dtype=float)
            if a.shape != (self.dim,):
                raise DomainError(f"expected {self.dim} coefficients, got shape {a.shape}")
            if np.any(a <= 0):
                raise DomainError("level-set coefficients must be strictly positive")
            a.setflags(write=False)
            object.__setattr__(self, "coeffs", a)
        elif self.kind is ModelKind.CONFORMAL_BALL:
            if self.curvature_param is None or not self.curvature_param < 0:
                raise DomainError("conformal ball needs a curvature parameter K0 < 0")
        if not self.name:
            object.__setattr__(self, "name", f"{self.kind.value}({self.dim})")

    @property
    def is_level_set(self) -> bool:
        return self.kind is ModelKind.LEVEL_SET

    @property
    def is_chart(self) -> bool:
        return not self.is_level_set

    @property
    def tangent_dim(self) -> int:
        """Dimension of each tangent space (N-1 for hypersurfaces, N for charts)."""
        return self.dim - 1 if self.is_level_set else self.dim

    @property
    def chart_radius(self) -> float:
        if self.kind is ModelKind.CONFORMAL_BALL:
            return 1.0 / np.sqrt(-self.curvature_param)
        return np.inf

    def __repr__(self):
        return f"ManifoldModel({self.name})"


def level_set(coeffs, name: str = "") -> ManifoldModel:
    a = np.asarray(coeffs, dtype=float)
    return ManifoldModel(ModelKind.LEVEL_SET, a.size, a, name=name)


def unit_sphere(n: int) -> ManifoldModel:
    return level_set(np.ones(n), name=f"unit_sphere({n})")


def grossman_sphere(n: int) -> ManifoldModel:
    """``x_1^2 + sum_{i>=2} (1 - 1/i)^2 x_i^2 = 1`` truncated to ``n`` coordinates."""
    i = np.arange(1, n + 1, dtype=float)
    a = (1.0 - 1.0 / i) ** 2
    a[0] = 1.0
    return level_set(a, name=f"grossman_sphere({n})")


def grossman_ellipsoid(n: int, exponent: int = 2) -> ManifoldModel:
    """``x_1^2 + x_2^2 + sum_{i>=3} (1 - 1/i)^exponent x_i^2 = 1``.

    The sectional curvature of the plane ``(e_2, e_k)`` along the great circle
    ``cos t e_1 + sin t e_2`` equals the coefficient ``(1 - 1/k)^exponent``.  The
    default ``exponent=2`` gives curvature ``(1 - 1/k)^2`` and conjugate instants
    ``k pi / (k - 1)``; ``exponent=4`` gives ``(1 - 1/k)^4`` and instants
    ``pi / (1 - 1/k)^2``.
    """
    if n < 3:
        raise DomainError("grossman_ellipsoid needs n >= 3")
    i = np.arange(1, n + 1, dtype=float)
    a = (1.0 - 1.0 / i) ** exponent
    a[:2] = 1.0
    suffix = "" if exponent == 2 else f", exponent={exponent}"
    return level_set(a, name=f"grossman_ellipsoid({n}{suffix})")


def flat(n: int) -> ManifoldModel:
    return ManifoldModel(ModelKind.FLAT, n, name=f"flat({n})")


def conformal_ball(n: int, k0: float = -1.0) -> ManifoldModel:
    """Ball ``|x| < 1/sqrt(-k0)`` with metric ``4 / (1 + k0 |x|^2)^2 <u, v>``."""
    return ManifoldModel(ModelKind.CONFORMAL_BALL, n, curvature_param=float(k0),
                         name=f"conformal_ball({n}, K0={k0:g})")


# -- points and tangent vectors ------------------------------------------------


@dataclass(frozen=True, eq=False)
class Point:
    model: ManifoldModel
    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.array(self.coords, dtype=float)
        x.setflags(write=False)
        object.__setattr__(self, "coords", x)
        check_point(self.model, x)


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: Point
    comps: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.comps, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "comps", w)
        check_tangent(self.base.model, self.base.coords, w)


def _coords(obj) -> np.ndarray:
    if isinstance(obj, Point):
        return obj.coords
    if isinstance(obj, TangentVector):
        return obj.comps
    return np.asarray(obj, dtype=float)


def _base(p, *vectors) -> np.ndarray:
    x = _coords(p)
    for u in vectors:
        if isinstance(u, TangentVector) and not np.array_equal(u.base.coords, x):
            raise DomainError("tangent vector is based at a different point")
    return x


def constraint_value(m: ManifoldModel, x) -> float:
    """``g(x) = sum a_i x_i^2 - 1`` for level sets; 0 for charts."""
    if not m.is_level_set:
        return 0.0
    x = np.asarray(x, dtype=float)
    return float(np.dot(m.coeffs * x, x) - 1.0)


def check_point(m: ManifoldModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (m.dim,):
        raise DomainError(f"point has shape {x.shape}, model dimension is {m.dim}")
    if m.is_level_set:
        if abs(constraint_value(m, x)) > m.constraint_tol:
            raise DomainError(f"point is off the level set (g = {constraint_value(m, x):.3e})")
    elif m.kind is ModelKind.CONFORMAL_BALL and not np.linalg.norm(x) < m.chart_radius:
        raise DomainError("point lies outside the conformal ball")
    return x


def check_tangent(m: ManifoldModel, x, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (m.dim,):
        raise DomainError(f"vector has shape {w.shape}, model dimension is {m.dim}")
    if m.is_level_set:
        grad = 2.0 * m.coeffs * np.asarray(x, dtype=float)
        if abs(np.dot(grad, w)) > m.tangency_tol * max(1.0, np.linalg.norm(w)):
            raise DomainError("vector is not tangent to the level set")
    return w


def point(m: ManifoldModel, coords) -> Point:
    return Point(m, coords)


def tangent(p: Point, comps) -> TangentVector:
    return TangentVector(p, comps)


# -- metric --------------------------------------------------------------------


def conformal_factor(m: ManifoldModel, x) -> float:
    """Return ``lambda(x)^2`` with ``g_x = lambda(x)^2 <.,.>`` (1 for level sets and flat space)."""
    if m.kind is ModelKind.CONFORMAL_BALL:
        x = np.asarray(x, dtype=float)
        return 4.0 / (1.0 + m.curvature_param * np.dot(x, x)) ** 2
    return 1.0


def metric_inner(m: ManifoldModel, p, u, v) -> float:
    x = _base(p, u, v)
    return conformal_factor(m, x) * float(np.dot(_coords(u), _coords(v)))


def metric_norm(m: ManifoldModel, p, u) -> float:
    return np.sqrt(metric_inner(m, p, u, u))


def unit_normal(m: ManifoldModel, x) -> np.ndarray:
    if not m.is_level_set:
        raise UnsupportedOperationError(f"{m.name} is a chart model and has no normal")
    ax = m.coeffs * np.asarray(x, dtype=float)
    return ax / np.linalg.norm(ax)


def project_tangent(m: ManifoldModel, p, w) -> np.ndarray:
    """Ambient-orthogonal projection onto ``T_pM``; identity on chart models."""
    x = _coords(p)
    w = np.asarray(_coords(w), dtype=float)
    if not m.is_level_set:
        return w.copy()
    nu = unit_normal(m, x)
    return w - np.dot(w, nu) * nu


# -- extrinsic geometry of level sets -------------------------------------------


def shape_operator(m: ManifoldModel, p, u) -> np.ndarray:
    """``S(u) = -(A u - nu <nu, A u>) / |A p|`` for the unit normal ``nu = A p / |A p|``."""
    if not m.is_level_set:
        raise UnsupportedOperationError("shape operator is only defined for level-set models")
    x = _base(p, u)
    u = _coords(u)
    ax = m.coeffs * x
    norm_ax = np.linalg.norm(ax)
    nu = ax / norm_ax
    au = m.coeffs * u
    return -(au - nu * np.dot(nu, au)) / norm_ax


# -- chart geometry ---------------------------------------------------------------


def _log_factor_derivs(m: ManifoldModel, x):
    """Gradient and Hessian of ``phi = log lambda`` for a conformal chart."""
    n = m.dim
    if m.kind is ModelKind.FLAT:
        return np.zeros(n), np.zeros((n, n))
    k0 = m.curvature_param
    d = 1.0 + k0 * np.dot(x, x)
    grad = -2.0 * k0 * x / d
    hess = -2.0 * k0 * np.eye(n) / d + 4.0 * k0 * k0 * np.outer(x, x) / (d * d)
    return grad, hess


def christoffel(m: ManifoldModel, x) -> np.ndarray:
    """Christoffel symbols ``G[k, i, j] = Gamma^k_ij`` of a conformal chart.

    For ``g = exp(2 phi) delta``: ``Gamma^k_ij = d_ik phi_j + d_jk phi_i - d_ij phi_k``.
    """
    if m.is_level_set:
        raise UnsupportedOperationError("Christoffel symbols are only used for chart models")
    x = np.asarray(x, dtype=float)
    grad, _ = _log_factor_derivs(m, x)
    eye = np.eye(m.dim)
    return (np.einsum("ki,j->kij", eye, grad) + np.einsum("kj,i->kij", eye, grad)
            - np.einsum("ij,k->kij", eye, grad))


def christoffel_derivative(m: ManifoldModel, x, method: str = "analytic") -> np.ndarray:
    """``D[l, k, i, j] = d_l Gamma^k_ij``; ``method="fd"`` uses central differences."""
    x = np.asarray(x, dtype=float)
    n = m.dim
    if method == "fd":
        out = np.empty((n, n, n, n))
        for l in range(n):
            e = np.zeros(n)
            e[l] = FD_STEP
            out[l] = (christoffel(m, x + e) - christoffel(m, x - e)) / (2 * FD_STEP)
        return out
    if method != "analytic":
        raise ValueError(f"unknown method {method!r}")
    _, hess = _log_factor_derivs(m, x)
    eye = np.eye(n)
    return (np.einsum("ki,jl->lkij", eye, hess) + np.einsum("kj,il->lkij", eye, hess)
            - np.einsum("ij,kl->lkij", eye, hess))


def riemann_tensor(m: ManifoldModel, x, method: str = "analytic") -> np.ndarray:
    """``Rm[l, i, j, k]`` such that ``(R(X, Y)Z)^l = Rm[l, i, j, k] X^i Y^j Z^k``."""
    gam = christoffel(m, x)
    dgam = christoffel_derivative(m, x, method)
    # d_i Gamma^l_jk - d_j Gamma^l_ik + Gamma^l_im Gamma^m_jk - Gamma^l_jm Gamma^m_ik
    t1 = np.einsum("iljk->lijk", dgam)
    t2 = np.einsum("jlik->lijk", dgam)
    t3 = np.einsum("lim,mjk->lijk", gam, gam)
    t4 = np.einsum("ljm,mik->lijk", gam, gam)
    return t1 - t2 + t3 - t4


# -- curvature -------------------------------------------------------------------------


def curvature_operator(m: ManifoldModel, p, x, y, z, method: str = "analytic") -> np.ndarray:
    """``R(x, y)z``: Gauss equation for level sets, Christoffel symbols for charts."""
    base = _base(p, x, y, z)
    x, y, z = _coords(x), _coords(y), _coords(z)
    if m.is_level_set:
        sx = shape_operator(m, base, x)
        sy = shape_operator(m, base, y)
        return np.dot(sy, z) * sx - np.dot(sx, z) * sy
    if m.kind is ModelKind.FLAT:
        return np.zeros(m.dim)
    return np.einsum("lijk,i,j,k->l", riemann_tensor(m, base, method), x, y, z)


def sectional_curvature(m: ManifoldModel, p, x, y, tol: float = 1e-12) -> float:
    base = _base(p, x, y)
    xx = metric_inner(m, base, x, x)
    yy = metric_inner(m, base, y, y)
    xy = metric_inner(m, base, x, y)
    denom = xx * yy - xy * xy
    if denom <= tol * max(xx * yy, 1e-300):
        raise DegeneratePlaneError("vectors do not span a 2-plane")
    r = curvature_operator(m, base, x, y, y)
    return metric_inner(m, base, r, x) / denom


def frame_curvature(m: ManifoldModel, x, v, frame) -> np.ndarray:
    """Matrix ``R[i, j] = <R(F_i, v)v, F_j>`` of the Jacobi operator in a frame ``F`` (columns)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    f = np.asarray(frame, dtype=float)
    if m.is_level_set:
        a = m.coeffs
        ax = a * x
        s2 = np.dot(ax, ax)
        av = a * v
        w = f.T @ av
        return (np.dot(v, av) * (f.T @ (a[:, None] * f)) - np.outer(w, w)) / s2
    if m.kind is ModelKind.FLAT:
        return np.zeros((f.shape[1], f.shape[1]))
    return conformal_factor(m, x) * (f.T @ _conformal_jacobi_operator(m, x, v, f))


def _conformal_jacobi_operator(m: ManifoldModel, x, v, f) -> np.ndarray:
    """Columns ``R(F_i, v)v`` for a conformal chart without forming the 4-tensor.

    With ``G(u, w) = Gamma(u, w)`` and ``D(X; u, w) = (d_X Gamma)(u, w)``:
    ``R(X, Y)Z = D(X; Y, Z) - D(Y; X, Z) + G(X, G(Y, Z)) - G(Y, G(X, Z))``.
    """
    g, hess = _log_factor_derivs(m, x)

    def gam(u, w):  # u, w: (N, k) column blocks
        return (g @ u) * w + (g @ w) * u - np.sum(u * w, axis=0) * g[:, None]

    def dgam(hx, u, w):  # hx = H X, columnwise
        return np.sum(hx * u, axis=0) * w + np.sum(hx * w, axis=0) * u - np.sum(u * w, axis=0) * hx

    k = f.shape[1]
    vv = np.repeat(v[:, None], k, axis=1)
    hf = hess @ f
    hv = np.repeat((hess @ v)[:, None], k, axis=1)
    gvv = gam(vv, vv)
    return dgam(hf, vv, vv) - dgam(hv, f, vv) + gam(f, gvv) - gam(vv, gam(f, vv))


# -- frames and sampling ---------------------------------------------------------------


def initial_frame(m: ManifoldModel, p, v=None, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis of ``T_pM`` (as columns) by Gram-Schmidt on ``v/|v|, e_1, e_2, ...``.

    Candidates are projected to the tangent space first; dependent ones are dropped.
    """
    x = _coords(p)
    lam2 = conformal_factor(m, x)
    n = m.dim
    candidates = [] if v is None else [_coords(v)]
    candidates += list(np.eye(n))
    basis = []
    for c in candidates:
        w = project_tangent(m, x, c)
        for b in basis:
            w = w - lam2 * np.dot(b, w) * b
        for b in basis:  # second pass keeps the frame orthonormal to rounding
            w = w - lam2 * np.dot(b, w) * b
        nrm = np.sqrt(lam2 * np.dot(w, w))
        if nrm > tol:
            basis.append(w / nrm)
        if len(basis) == m.tangent_dim:
            break
    return np.column_stack(basis)


def random_point(m: ManifoldModel, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(m.dim)
    if m.is_level_set:
        return z / np.sqrt(np.dot(m.coeffs * z, z))
    if m.kind is ModelKind.CONFORMAL_BALL:
        return 0.4 * m.chart_radius * rng.uniform() * z / np.linalg.norm(z)
    return z


def random_tangent(m: ManifoldModel, p, rng: np.random.Generator, unit: bool = True) -> np.ndarray:
    w = project_tangent(m, p, rng.standard_normal(m.dim))
    if unit:
        w = w / metric_norm(m, p, w)
    return w
