"""Geodesics, parallel transport, lengths and distances.

All integration is fixed-step classical RK4.  On level sets the position is
rescaled back onto the level set after every step and the velocity and frame
are re-projected onto the tangent space.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from . import kernels
from .errors import BVPFailure, ChartEscapeError, DomainError
from .manifolds import (
    ManifoldModel,
    ModelKind,
    _coords,
    check_point,
    check_tangent,
    conformal_factor,
    initial_frame,
    metric_norm,
    project_tangent,
)

DEFAULT_STEP = 1e-3
# dense output is thinned so that one stored trajectory stays below ~100 MB
MAX_STORED_FLOATS = 12_000_000


def time_grid(t_end: float, step: float) -> tuple[int, float]:
    """Number of steps and the actual step size landing exactly on ``t_end``."""
    if step <= 0:
        raise DomainError("step must be positive")
    nsteps = max(1, math.ceil(abs(t_end) / step - 1e-9))
    return nsteps, t_end / nsteps


def auto_stride(nsteps: int, floats_per_node: int) -> int:
    return max(1, math.ceil((nsteps + 1) * floats_per_node / MAX_STORED_FLOATS))


def integrate(m: ManifoldModel, x0, v0, f0, y0, yd0, h: float, nsteps: int, stride: int):
    """Run the joint geodesic / frame / Jacobi integrator for either model family."""
    if m.is_level_set:
        return kernels.ls_flow(m.coeffs, x0, v0, f0, y0, yd0, h, nsteps, stride)
    return kernels.chart_flow(m, x0, v0, f0, y0, yd0, h, nsteps, stride)


def geodesic_points(m: ManifoldModel, x0, v0, h: float, nsteps: int, stride: int):
    """Positions and velocities only (no frame): the fast path used by shooting."""
    if m.is_level_set:
        return kernels.ls_geodesic(m.coeffs, x0, v0, h, nsteps, stride)
    empty = np.zeros((m.dim, 0))
    xs, vs, *_ = kernels.chart_flow(m, x0, v0, empty, np.zeros((0, 0)), np.zeros((0, 0)),
                                    h, nsteps, stride)
    return xs, vs


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    """Dense geodesic trajectory ``t -> exp_p(t v)`` with an optional parallel frame.

    ``frames[i]`` holds the transported orthonormal basis as columns
    (``N x n``, ``n`` the tangent dimension).
    """

    model: ManifoldModel
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    frames: np.ndarray | None
    step: float
    nsteps: int
    stride: int

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def initial_velocity(self) -> np.ndarray:
        return self.velocities[0]

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]

    @property
    def end_velocity(self) -> np.ndarray:
        return self.velocities[-1]

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def speeds(self) -> np.ndarray:
        lam2 = np.array([conformal_factor(self.model, x) for x in self.points])
        return np.sqrt(lam2 * np.einsum("ij,ij->i", self.velocities, self.velocities))


def geodesic_ivp(m: ManifoldModel, p, v, t_end: float, step: float = DEFAULT_STEP,
                 frame: bool = True, stride: int | None = None) -> GeodesicPath:
    """Integrate the geodesic with ``gamma(0) = p``, ``gamma'(0) = v`` on ``[0, t_end]``.

    The level-set equation is ``x'' = -(x'^T A x' / |A x|^2) A x``; chart models use
    ``x''^k = -Gamma^k_ij x'^i x'^j``.  With ``frame=True`` the orthonormal basis
    from :func:`~hilbert_geo.manifolds.initial_frame` is transported along.
    """
    x0 = check_point(m, _coords(p))
    v0 = check_tangent(m, x0, _coords(v))
    if t_end <= 0:
        raise DomainError("t_end must be positive")
    nsteps, h = time_grid(t_end, step)
    if frame:
        f0 = initial_frame(m, x0, v0)
        if stride is None:
            stride = auto_stride(nsteps, m.dim * (f0.shape[1] + 2))
        xs, vs, fs, *_ = integrate(m, x0, v0, f0, np.zeros((f0.shape[1], 0)),
                                   np.zeros((f0.shape[1], 0)), h, nsteps, stride)
    else:
        stride = stride or auto_stride(nsteps, 2 * m.dim)
        xs, vs = geodesic_points(m, x0, v0, h, nsteps, stride)
        fs = None
    times = h * np.asarray(kernels.stored_steps(nsteps, stride), dtype=float)
    return GeodesicPath(m, times, xs, vs, fs, h, nsteps, stride)


def exp_map(m: ManifoldModel, p, v, step: float = DEFAULT_STEP) -> np.ndarray:
    """``exp_p(v)``: the time-1 point of the geodesic with initial velocity ``v``."""
    x0 = check_point(m, _coords(p))
    v0 = check_tangent(m, x0, _coords(v))
    if not np.any(v0):
        return x0.copy()
    nsteps, h = time_grid(1.0, step)
    xs, _ = geodesic_points(m, x0, v0, h, nsteps, nsteps)
    return xs[-1]


def parallel_transport(m: ManifoldModel, path: GeodesicPath, u0) -> np.ndarray:
    """Transport ``u0`` along ``path``; returns one vector per stored node.

    Level sets: ``u' = -(u^T A gamma' / |A gamma|^2) A gamma`` (normal only);
    charts: ``u'^k = -Gamma^k_ij gamma'^i u^j``.
    """
    if path.model is not m:
        raise DomainError("path belongs to a different model")
    u0 = check_tangent(m, path.start, _coords(u0))
    empty = np.zeros((1, 0))
    _, _, fs, *_ = integrate(m, path.start, path.initial_velocity, u0[:, None], empty, empty,
                             path.step, path.nsteps, path.stride)
    return fs[:, :, 0]


def path_length(m: ManifoldModel, path: GeodesicPath) -> float:
    """Composite Simpson quadrature of the speed over the stored grid."""
    if len(path.times) < 2:
        return 0.0
    return float(simpson(path.speeds(), x=path.times))


# -- boundary-value problem ------------------------------------------------------------


def _seed_directions(m: ManifoldModel, x: np.ndarray, y: np.ndarray, count: int):
    """Unit directions at ``x``: towards ``y`` first, then the coordinate axes ``e_N, e_{N-1}, ...``."""
    cands = [project_tangent(m, x, y - x)] + [project_tangent(m, x, e) for e in np.eye(m.dim)[::-1]]
    dirs = []
    for c in cands:
        nrm = metric_norm(m, x, c)
        if nrm < 1e-8:
            continue
        d = c / nrm
        if any(abs(np.dot(d, e)) / np.dot(e, e) > 1 - 1e-9 for e in dirs):
            continue
        dirs.append(d)
        if len(dirs) == count:
            break
    return dirs


def _seed_velocity(m: ManifoldModel, x, y, d, coarse_step: float = 1e-2):
    """Scale direction ``d`` by the time of closest approach of its geodesic to ``y``."""
    if m.is_level_set:
        t_max = 1.2 * math.pi / math.sqrt(m.coeffs.min())
        nsteps, h = time_grid(t_max, coarse_step)
        xs, _ = geodesic_points(m, x, d, h, nsteps, 1)
        dist = np.linalg.norm(xs - y, axis=1)
        return d * (h * int(np.argmin(dist)))
    # charts: length of the straight coordinate segment
    s = np.linspace(0.0, 1.0, 65)
    seg = x[None, :] + s[:, None] * (y - x)[None, :]
    lam = np.sqrt([conformal_factor(m, z) for z in seg])
    return d * float(simpson(lam * np.linalg.norm(y - x), x=s))


def _newton_shoot(m, x, y, basis, c0, step, tol, max_iter, jacobian):
    speed0 = max(metric_norm(m, x, basis @ c0), step)
    nsteps = max(1, math.ceil(speed0 / step))
    h = 1.0 / nsteps

    def endpoint(c):
        xs, _ = geodesic_points(m, x, basis @ c, h, nsteps, nsteps)
        return xs[-1]

    def jac(c):
        if jacobian == "jacobi":
            n = basis.shape[1]
            _, _, fs, ys, *_ = integrate(m, x, basis @ c, basis, np.zeros((n, n)), np.eye(n),
                                         h, nsteps, nsteps)
            return fs[-1] @ ys[-1]
        eps = 1e-6
        cols = []
        for j in range(c.size):
            e = np.zeros_like(c)
            e[j] = eps
            cols.append((endpoint(c + e) - endpoint(c - e)) / (2 * eps))
        return np.column_stack(cols)

    c = c0.copy()
    r = endpoint(c) - y
    res = np.linalg.norm(r)
    for _ in range(max_iter):
        if res <= tol:
            return c
        delta = np.linalg.lstsq(jac(c), -r, rcond=1e-10)[0]
        alpha = 1.0
        while alpha > 1e-6:
            c_new = c + alpha * delta
            try:
                r_new = endpoint(c_new) - y
            except ChartEscapeError:
                r_new = None
            if r_new is not None and np.linalg.norm(r_new) < res:
                break
            alpha *= 0.5
        else:
            return None
        c, r, res = c_new, r_new, np.linalg.norm(r_new)
    return c if res <= tol else None


def shoot_bvp(m: ManifoldModel, p, q, restarts: int = 4, tol: float = 1e-9,
              step: float = DEFAULT_STEP, jacobian: str = "fd", max_iter: int = 40,
              frame: bool = False) -> GeodesicPath:
    """Find a geodesic from ``p`` to ``q`` by damped-Newton shooting.

    Each restart starts from a direction in the 2-plane through ``p`` spanned by
    the position and a coordinate axis (the direction towards ``q`` first), scaled
    by a coarse closest-approach search.  Among converged solutions the shortest
    wins; lengths equal to within 1e-9 are broken by the lexicographically
    smallest initial velocity.

    Returns a path on ``[0, 1]`` whose initial velocity ``v`` satisfies
    ``exp_p(v) = q`` within ``tol``.
    """
    x = check_point(m, _coords(p))
    y = check_point(m, _coords(q))
    if jacobian not in ("fd", "jacobi"):
        raise ValueError(f"unknown jacobian method {jacobian!r}")
    if np.allclose(x, y, rtol=0, atol=1e-14):
        return GeodesicPath(m, np.array([0.0, 1.0]), np.array([x, x]), np.zeros((2, m.dim)),
                            None, 1.0, 1, 1)
    basis = initial_frame(m, x)
    solutions = []
    for d in _seed_directions(m, x, y, max(1, restarts)):
        try:
            v_seed = _seed_velocity(m, x, y, d)
            c0 = basis.T @ (conformal_factor(m, x) * v_seed)
            c = _newton_shoot(m, x, y, basis, c0, step, tol, max_iter, jacobian)
        except ChartEscapeError:
            continue
        if c is None:
            continue
        v = basis @ c
        solutions.append((metric_norm(m, x, v), tuple(v)))
    if not solutions:
        raise BVPFailure(f"shooting from {x} to {y} failed after {restarts} restarts")
    best_len = min(s[0] for s in solutions)
    ties = [s for s in solutions if s[0] <= best_len + 1e-9]
    v_best = np.array(min(ties, key=lambda s: s[1])[1])
    nsteps = max(1, math.ceil(best_len / step))
    return geodesic_ivp(m, x, v_best, 1.0, step=1.0 / nsteps, frame=frame)


def distance_between(m: ManifoldModel, p, q, restarts: int = 4, **kwargs) -> float:
    """Length of the shortest geodesic found between ``p`` and ``q``."""
    x, y = _coords(p), _coords(q)
    if np.allclose(x, y, rtol=0, atol=1e-14):
        return 0.0
    return path_length(m, shoot_bvp(m, x, y, restarts=restarts, **kwargs))


# -- isometries ---------------------------------------------------------------------------


class IsometryKind(enum.Enum):
    SIGN_FLIP = "SignFlip"
    PLANE_ROTATION = "PlaneRotation"
    TRANSLATION = "Translation"
    ANTIPODAL = "Antipodal"


@dataclass(frozen=True)
class IsometryDescriptor:
    """One of the four supported isometries.  Coordinate indices are 1-based."""

    kind: IsometryKind
    indices: tuple = ()
    angle: float = 0.0
    vector: tuple = ()

    @classmethod
    def sign_flip(cls, indices):
        return cls(IsometryKind.SIGN_FLIP, tuple(int(i) for i in indices))

    @classmethod
    def plane_rotation(cls, i, j, angle):
        if i == j:
            raise DomainError("rotation plane needs two distinct axes")
        return cls(IsometryKind.PLANE_ROTATION, (int(i), int(j)), float(angle))

    @classmethod
    def translation(cls, vector):
        return cls(IsometryKind.TRANSLATION, vector=tuple(float(t) for t in vector))

    @classmethod
    def antipodal(cls):
        return cls(IsometryKind.ANTIPODAL)

    def apply(self, x) -> np.ndarray:
        x = np.array(_coords(x), dtype=float)
        if self.kind is IsometryKind.SIGN_FLIP:
            for i in self.indices:
                x[i - 1] = -x[i - 1]
        elif self.kind is IsometryKind.PLANE_ROTATION:
            i, j = self.indices[0] - 1, self.indices[1] - 1
            c, s = math.cos(self.angle), math.sin(self.angle)
            x[i], x[j] = c * x[i] - s * x[j], s * x[i] + c * x[j]
        elif self.kind is IsometryKind.TRANSLATION:
            x = x + np.asarray(self.vector)
        else:
            x = -x
        return x

    def preserves(self, m: ManifoldModel) -> bool:
        idx = self.indices
        if any(not 1 <= i <= m.dim for i in idx):
            return False
        if self.kind is IsometryKind.TRANSLATION:
            return m.kind is ModelKind.FLAT and len(self.vector) == m.dim
        if self.kind is IsometryKind.PLANE_ROTATION and m.is_level_set:
            return m.coeffs[idx[0] - 1] == m.coeffs[idx[1] - 1]
        return True


def displacement(m: ManifoldModel, f: IsometryDescriptor, p, restarts: int = 4, **kwargs) -> float:
    """``delta_f(p) = d(p, f(p))``; constant in ``p`` exactly for Clifford translations."""
    if not f.preserves(m):
        raise DomainError(f"{f.kind.value} does not preserve {m.name}")
    x = check_point(m, _coords(p))
    return distance_between(m, x, f.apply(x), restarts=restarts, **kwargs)
