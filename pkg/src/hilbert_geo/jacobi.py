"""Jacobi flow, conjugate instants and the structural identities of the Jacobi equation.

Everything is expressed in the coordinates of a parallel orthonormal frame
``E_1(t), ..., E_n(t)`` along the geodesic.  In those coordinates the Jacobi
operator is the symmetric matrix ``R_t[i, j] = <R(E_i, gamma') gamma', E_j>``
and the Jacobi flow is the matrix ODE ``T'' + R_t T = 0`` with ``T(0) = 0``,
``T'(0) = Id``.  ``T(t)`` fails to be invertible exactly at the conjugate
instants of the geodesic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq, minimize_scalar

from .errors import DomainError
from .manifolds import ManifoldModel, _coords, check_tangent, conformal_factor, frame_curvature, initial_frame
from .transport import GeodesicPath, auto_stride, integrate, time_grid
from . import kernels

log = logging.getLogger(__name__)

SING_TOL = 1e-6
MERGE_TOL = 1e-5
# refined roots closer than this are one root found twice
DUPLICATE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MatrixFlow:
    """Geodesic, parallel frame and a matrix Jacobi solution ``Y`` on a time grid.

    Only every ``stride``-th step is stored; :meth:`state_at` re-integrates
    from the nearest stored node to reach any intermediate time.
    """

    path: GeodesicPath
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    frames: np.ndarray
    Y: np.ndarray
    Ydot: np.ndarray
    R_frame: np.ndarray
    step: float
    stride: int

    @property
    def model(self) -> ManifoldModel:
        return self.path.model

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def state_at(self, t: float):
        """``(x, v, F, Y, Ydot, R)`` at time ``t`` by local re-integration."""
        if not -1e-12 <= t <= self.t_end + 1e-12:
            raise DomainError(f"t={t} outside the flow range [0, {self.t_end}]")
        j = int(np.argmin(np.abs(self.times - t)))
        dt = t - self.times[j]
        if abs(dt) <= 1e-14:
            return (self.points[j], self.velocities[j], self.frames[j], self.Y[j],
                    self.Ydot[j], self.R_frame[j])
        nsub = max(1, math.ceil(abs(dt) / self.step - 1e-9))
        out = integrate(self.model, self.points[j], self.velocities[j], self.frames[j],
                        self.Y[j], self.Ydot[j], dt / nsub, nsub, nsub)
        return tuple(a[-1] for a in out)


@dataclass(frozen=True, eq=False)
class JacobiFlow(MatrixFlow):
    """Jacobi flow ``T(t)``: ``Y`` holds ``T``, ``Ydot`` holds ``T'``."""

    @property
    def T(self) -> np.ndarray:
        return self.Y

    @property
    def Tdot(self) -> np.ndarray:
        return self.Ydot

    def T_at(self, t: float) -> np.ndarray:
        return self.state_at(t)[3]


@dataclass(frozen=True, eq=False)
class SymplecticFlow(MatrixFlow):
    """Fundamental solution of the Jacobi equation on ``T_pM x T_pM``.

    ``Y = [C | T]`` where ``C`` solves ``C(0) = Id, C'(0) = 0``; hence
    ``Psi(t) = [[C, T], [C', T']]`` maps initial data ``(J(0), J'(0))`` to
    ``(J(t), J'(t))`` in frame coordinates.
    """

    @property
    def Psi(self) -> np.ndarray:
        return np.concatenate([self.Y, self.Ydot], axis=1)

    def Psi_at(self, t: float) -> np.ndarray:
        _, _, _, y, yd, _ = self.state_at(t)
        return np.vstack([y, yd])


def _path_frame(m: ManifoldModel, path: GeodesicPath) -> np.ndarray:
    if path.frames is not None:
        return path.frames[0]
    return initial_frame(m, path.start, path.initial_velocity)


def _run(cls, m, path, y0, yd0, t_end=None, stride=None):
    """Integrate the joint system from the start of ``path`` (on its grid unless ``t_end`` given)."""
    if path.model is not m:
        raise DomainError("path belongs to a different model")
    f0 = _path_frame(m, path)
    if t_end is None:
        nsteps, h = path.nsteps, path.step
    else:
        nsteps, h = time_grid(t_end, path.step)
    n, k = f0.shape[1], y0.shape[1]
    if stride is None:
        stride = auto_stride(nsteps, m.dim * (n + 2) + n * n + 2 * n * k)
    xs, vs, fs, ys, yds, rs = integrate(m, path.start, path.initial_velocity, f0, y0, yd0,
                                        h, nsteps, stride)
    times = h * np.asarray(kernels.stored_steps(nsteps, stride), dtype=float)
    return cls(path, times, xs, vs, fs, ys, yds, rs, h, stride)


def jacobi_flow(m: ManifoldModel, path: GeodesicPath, t_end: float | None = None,
                stride: int | None = None) -> JacobiFlow:
    """Solve ``T'' + R_t T = 0``, ``T(0) = 0``, ``T'(0) = Id`` along ``path``.

    ``E_i(t) T(t)`` gives ``t (d exp_p)_{t v}`` applied to ``E_i(0)``.
    """
    n = m.tangent_dim
    return _run(JacobiFlow, m, path, np.zeros((n, n)), np.eye(n), t_end, stride)


def symplectic_flow(m: ManifoldModel, path: GeodesicPath, t_end: float | None = None,
                    stride: int | None = None) -> SymplecticFlow:
    n = m.tangent_dim
    y0 = np.hstack([np.eye(n), np.zeros((n, n))])
    yd0 = np.hstack([np.zeros((n, n)), np.eye(n)])
    return _run(SymplecticFlow, m, path, y0, yd0, t_end, stride)


def curvature_frame(m: ManifoldModel, path: GeodesicPath) -> np.ndarray:
    """``R_t`` in the parallel frame at every stored node of ``path``."""
    if path.frames is None:
        raise DomainError("path was integrated without a frame")
    return np.array([frame_curvature(m, x, v, f)
                     for x, v, f in zip(path.points, path.velocities, path.frames)])


# -- conjugate instants ---------------------------------------------------------------


@dataclass(frozen=True)
class ConjugateInstant:
    t: float
    multiplicity: int
    # in finite dimension a non-injective T(t) is also non-surjective
    kind: str = "both"


@dataclass
class ConjugateReport:
    instants: list[ConjugateInstant]
    sigma_min_profile: tuple[np.ndarray, np.ndarray]
    det_sign_changes: list[tuple[float, float]]
    warnings: list[str] = field(default_factory=list)

    @property
    def times(self) -> list[float]:
        return [c.t for c in self.instants]


def _sigma_min(T: np.ndarray) -> float:
    return float(np.linalg.svd(T, compute_uv=False)[-1])


def sigma_min_at(flow: JacobiFlow, t: float) -> float:
    """Smallest singular value of ``T(t)``."""
    return _sigma_min(flow.T_at(t))


def _signed_sigma(flow, t):
    T = flow.T_at(t)
    return np.linalg.slogdet(T)[0] * _sigma_min(T)


def _polish(flow, t, a, b, width=1e-6):
    """Sharpen an odd-multiplicity zero with a root solve on ``sign(det T) sigma_min``."""
    lo, hi = max(a, t - width), min(b, t + width)
    f_lo, f_hi = _signed_sigma(flow, lo), _signed_sigma(flow, hi)
    if f_lo * f_hi < 0:
        return brentq(lambda s: _signed_sigma(flow, s), lo, hi, xtol=1e-14)
    return t


def scan_conjugate(flow: JacobiFlow, sing_tol: float = SING_TOL,
                   merge_tol: float = MERGE_TOL) -> ConjugateReport:
    """Locate the instants where ``T(t)`` is singular.

    Brackets come from sign changes of ``det T`` (odd multiplicity) and from
    grid-local minima of ``sigma_min(T)`` (any multiplicity).  Each bracket is
    refined by minimising ``sigma_min`` over it; an instant is accepted when the
    refined minimum is below ``sing_tol``, and its multiplicity is the number of
    singular values below ``sing_tol`` there.
    """
    times = flow.times
    svals = np.array([np.linalg.svd(T, compute_uv=False) for T in flow.T])
    sig = svals[:, -1]
    signs = np.array([np.linalg.slogdet(T)[0] for T in flow.T])
    last = len(times) - 1

    det_changes = []
    brackets = []
    for i in range(1, last):
        if signs[i] != 0 and signs[i + 1] != 0 and signs[i] != signs[i + 1]:
            det_changes.append((float(times[i]), float(times[i + 1])))
            brackets.append([i, i + 1, True])
    for i in range(1, last):
        if sig[i] <= sig[i - 1] and sig[i] <= sig[i + 1]:
            brackets.append([i - 1, i + 1, False])
    if last >= 1 and sig[last] < sig[last - 1] and sig[last] <= sing_tol:
        brackets.append([last - 1, last, False])

    # merge overlapping brackets
    brackets.sort()
    merged = []
    for lo, hi, from_det in brackets:
        if merged and lo < merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
            merged[-1][2] = merged[-1][2] or from_det
        else:
            merged.append([lo, hi, from_det])

    warnings = []
    found = []
    for lo, hi, from_det in merged:
        a, b = float(times[lo]), float(times[hi])
        res = minimize_scalar(lambda t: sigma_min_at(flow, t), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-12, "maxiter": 500})
        t_star = _polish(flow, float(res.x), a, b)
        s = np.linalg.svd(flow.T_at(t_star), compute_uv=False)
        if s[-1] <= sing_tol:
            found.append(ConjugateInstant(t_star, int(np.sum(s <= sing_tol))))
        elif from_det:
            msg = (f"det T changes sign in [{a:.6g}, {b:.6g}] but sigma_min only reaches "
                   f"{s[-1]:.3g}; grid too coarse to resolve")
            log.warning(msg)
            warnings.append(msg)

    instants = []
    for c in sorted(found, key=lambda c: c.t):
        if instants and c.t - instants[-1].t < merge_tol:
            prev = instants[-1]
            if c.t - prev.t <= DUPLICATE_TOL:
                # the same root reached from two brackets: each count is already the full kernel
                mult = max(prev.multiplicity, c.multiplicity)
            else:
                mult = prev.multiplicity + c.multiplicity
            instants[-1] = ConjugateInstant(prev.t, mult)
        else:
            instants.append(c)
    return ConjugateReport(instants, (times.copy(), sig), det_changes, warnings)


# -- structural identities ----------------------------------------------------------------


def _omega_matrix(n: int) -> np.ndarray:
    """``omega((X, Y), (Z, W)) = <X, W> - <Y, Z>`` as a 2n x 2n matrix."""
    return np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])


def symplectic_form(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = u.size // 2
    return float(np.dot(u[:n], v[n:]) - np.dot(u[n:], v[:n]))


def omega_defect(sflow: SymplecticFlow, t: float | None = None) -> float:
    """``max |Psi^T Omega Psi - Omega|`` at ``t`` (or the worst stored node)."""
    n = sflow.Y.shape[2] // 2
    om = _omega_matrix(n)
    psis = [sflow.Psi_at(t)] if t is not None else list(sflow.Psi)
    return max(float(np.abs(P.T @ om @ P - om).max()) for P in psis)


def lagrangian_residual(sflow: SymplecticFlow, t: float) -> float:
    """Max ``|omega(u, v)|`` over the basis ``Psi(t)(0, E_i)`` of ``E_t``."""
    _, _, _, y, yd, _ = sflow.state_at(t)
    n = y.shape[0]
    T, Td = y[:, n:], yd[:, n:]
    return float(np.abs(T.T @ Td - Td.T @ T).max())


def _to_frame(m, path, f0, w):
    w = check_tangent(m, path.start, _coords(w))
    return f0.T @ (conformal_factor(m, path.start) * w)


def ambrose_drift(m: ManifoldModel, path: GeodesicPath, init1, init2) -> float:
    """Max over the path of ``|W(t) - W(0)|`` with ``W = <J1', J2> - <J1, J2'>``.

    ``init1`` and ``init2`` are pairs ``(J(0), J'(0))`` of tangent vectors at the
    start of ``path``.
    """
    f0 = _path_frame(m, path)
    (x1, y1), (x2, y2) = init1, init2
    y0 = np.column_stack([_to_frame(m, path, f0, x1), _to_frame(m, path, f0, x2)])
    yd0 = np.column_stack([_to_frame(m, path, f0, y1), _to_frame(m, path, f0, y2)])
    flow = _run(MatrixFlow, m, path, y0, yd0)
    J, Jd = flow.Y, flow.Ydot
    w = np.einsum("ti,ti->t", Jd[:, :, 0], J[:, :, 1]) - np.einsum("ti,ti->t", J[:, :, 0], Jd[:, :, 1])
    return float(np.abs(w - w[0]).max())


def transpose_residual(m: ManifoldModel, path: GeodesicPath, t0: float) -> float:
    """Operator-norm gap between ``T(t0)^T`` and the Jacobi flow of the reversed geodesic.

    The reversed geodesic starts at ``gamma(t0)`` with velocity ``-gamma'(t0)`` and
    carries the transported frame ``E(t0)``, so parallel transport between the two
    ends is the identity in frame coordinates.
    """
    if not 0 < t0 <= path.t_end + 1e-12:
        raise DomainError("t0 outside the path range")
    fwd = jacobi_flow(m, path, t_end=t0, stride=path.nsteps + 1)
    x1, v1, f1, T_fwd = fwd.points[-1], fwd.velocities[-1], fwd.frames[-1], fwd.T[-1]
    n = f1.shape[1]
    nsteps, h = time_grid(t0, path.step)
    out = integrate(m, x1, -v1, f1, np.zeros((n, n)), np.eye(n), h, nsteps, nsteps)
    T_rev = out[3][-1]
    return float(np.linalg.norm(T_fwd.T - T_rev, ord=2))


def fredholm_residual(flow: JacobiFlow, t: float) -> float:
    """``|| T(t) - t Id + int_0^t int_0^h R_s T(s) ds dh ||``.

    The iterated integral equals ``int_0^t (t - s) R_s T(s) ds``, evaluated with
    composite Simpson quadrature on the flow grid.
    """
    if not 0 < t <= flow.t_end + 1e-12:
        raise DomainError(f"t={t} outside the flow range")
    j = int(np.argmin(np.abs(flow.times - t)))
    if abs(flow.times[j] - t) > 1e-12:
        flow = jacobi_flow(flow.model, flow.path, t_end=t, stride=flow.stride)
        j = len(flow.times) - 1
    s = flow.times[: j + 1]
    integrand = (t - s)[:, None, None] * np.einsum("tij,tjk->tik", flow.R_frame[: j + 1],
                                                   flow.T[: j + 1])
    integral = simpson(integrand, x=s, axis=0)
    n = flow.T.shape[1]
    return float(np.linalg.norm(flow.T[j] - t * np.eye(n) + integral, ord=2))


def constant_curvature_closed_form(k0: float, t, speed: float = 1.0) -> np.ndarray:
    """``sin(t sqrt(K) |v|) / (sqrt(K) |v|)``, ``t`` or ``sinh(...)`` for the normal block."""
    t = np.asarray(t, dtype=float)
    if k0 > 0:
        r = math.sqrt(k0) * speed
        return np.sin(r * t) / r
    if k0 < 0:
        r = math.sqrt(-k0) * speed
        return np.sinh(r * t) / r
    return t.copy()
