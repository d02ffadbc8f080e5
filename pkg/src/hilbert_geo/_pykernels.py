"""Pure-Python (numpy) RK4 kernels.

These are the reference implementations; ``_ckernels.pyx`` mirrors the
routines step for step.

Level-set state: ambient position ``x``, velocity ``v``, a parallel frame
``F`` (columns, ``N x n``), and a matrix Jacobi solution ``Y`` (``n x k``) with
its derivative ``Yd``, all in the coordinates of the parallel frame.
"""

import numpy as np

from .errors import ChartEscapeError
from .manifolds import ModelKind, _log_factor_derivs, frame_curvature


def stored_steps(nsteps, stride):
    """Step indices kept in dense output: every ``stride``-th step plus the last one."""
    idx = list(range(0, nsteps + 1, stride))
    if idx[-1] != nsteps:
        idx.append(nsteps)
    return idx


def _ls_geo_deriv(a, x, v):
    ax = a * x
    return v, -(np.dot(v, a * v) / np.dot(ax, ax)) * ax


def _ls_project(a, x, v, f=None):
    x = x / np.sqrt(np.dot(a * x, x))
    ax = a * x
    nu = ax / np.sqrt(np.dot(ax, ax))
    v = v - np.dot(v, nu) * nu
    if f is not None:
        f = f - np.outer(nu, nu @ f)
    return x, v, f


def ls_geodesic(a, x0, v0, h, nsteps, stride):
    """Integrate a level-set geodesic; return positions and velocities at stored steps."""
    a = np.asarray(a, dtype=float)
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    keep = stored_steps(nsteps, stride)
    xs = np.empty((len(keep), x.size))
    vs = np.empty_like(xs)
    xs[0], vs[0] = x, v
    slot = 1
    for step in range(1, nsteps + 1):
        k1x, k1v = _ls_geo_deriv(a, x, v)
        k2x, k2v = _ls_geo_deriv(a, x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = _ls_geo_deriv(a, x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = _ls_geo_deriv(a, x + h * k3x, v + h * k3v)
        x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        x, v, _ = _ls_project(a, x, v)
        if slot < len(keep) and keep[slot] == step:
            xs[slot], vs[slot] = x, v
            slot += 1
    return xs, vs


def _ls_flow_deriv(a, x, v, f, y, yd, with_jacobi):
    ax = a * x
    s2 = np.dot(ax, ax)
    av = a * v
    c = np.dot(v, av)
    w = f.T @ av
    dv = -(c / s2) * ax
    df = -np.outer(ax, w) / s2
    if not with_jacobi:
        return v, dv, df, None, None, None
    r = (c * (f.T @ (a[:, None] * f)) - np.outer(w, w)) / s2
    r = 0.5 * (r + r.T)
    return v, dv, df, yd, -r @ y, r


def ls_flow(a, x0, v0, f0, y0, yd0, h, nsteps, stride):
    """Integrate geodesic, parallel frame and the matrix Jacobi equation ``Y'' = -R_t Y``.

    Returns ``(xs, vs, fs, ys, yds, rs)`` at the stored steps; the last three are
    ``None`` when ``y0`` has no columns.
    """
    a = np.asarray(a, dtype=float)
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    f = np.array(f0, dtype=float)
    y = np.array(y0, dtype=float)
    yd = np.array(yd0, dtype=float)
    with_jacobi = y.shape[1] > 0
    keep = stored_steps(nsteps, stride)
    ns = len(keep)
    n, k = f.shape[1], y.shape[1]
    xs = np.empty((ns, x.size))
    vs = np.empty_like(xs)
    fs = np.empty((ns, x.size, n))
    ys = yds = rs = None
    if with_jacobi:
        ys = np.empty((ns, n, k))
        yds = np.empty_like(ys)
        rs = np.empty((ns, n, n))

    def record(slot, k1):
        xs[slot], vs[slot], fs[slot] = x, v, f
        if with_jacobi:
            ys[slot], yds[slot], rs[slot] = y, yd, k1[5]

    slot = 0
    for step in range(nsteps + 1):
        k1 = _ls_flow_deriv(a, x, v, f, y, yd, with_jacobi)
        if slot < ns and keep[slot] == step:
            record(slot, k1)
            slot += 1
        if step == nsteps:
            break
        stages = [k1]
        for frac in (0.5, 0.5, 1.0):
            prev = stages[-1]
            hs = frac * h
            stages.append(_ls_flow_deriv(
                a, x + hs * prev[0], v + hs * prev[1], f + hs * prev[2],
                y + hs * prev[3] if with_jacobi else y,
                yd + hs * prev[4] if with_jacobi else yd,
                with_jacobi))
        k1, k2, k3, k4 = stages

        def comb(i):
            return h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])

        x, v, f = x + comb(0), v + comb(1), f + comb(2)
        if with_jacobi:
            y, yd = y + comb(3), yd + comb(4)
        x, v, f = _ls_project(a, x, v, f)
    return xs, vs, fs, ys, yds, rs


# -- chart models ----------------------------------------------------------------------


def _chart_deriv(model, x, v, f, y, yd, with_jacobi):
    if model.kind is ModelKind.FLAT:
        zero_f = np.zeros_like(f)
        if not with_jacobi:
            return v, np.zeros_like(v), zero_f, None, None, None
        r = np.zeros((f.shape[1], f.shape[1]))
        return v, np.zeros_like(v), zero_f, yd, np.zeros_like(y), r
    g, _ = _log_factor_derivs(model, x)
    gv = np.dot(g, v)
    dv = -2.0 * gv * v + np.dot(v, v) * g
    df = -(np.outer(v, g @ f) + gv * f - np.outer(g, v @ f))
    if not with_jacobi:
        return v, dv, df, None, None, None
    r = frame_curvature(model, x, v, f)
    r = 0.5 * (r + r.T)
    return v, dv, df, yd, -r @ y, r


def chart_flow(model, x0, v0, f0, y0, yd0, h, nsteps, stride):
    """Chart-model counterpart of :func:`ls_flow` (no projection; checks chart escape)."""
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    f = np.array(f0, dtype=float)
    y = np.array(y0, dtype=float)
    yd = np.array(yd0, dtype=float)
    with_jacobi = y.shape[1] > 0
    keep = stored_steps(nsteps, stride)
    ns = len(keep)
    n, k = f.shape[1], y.shape[1]
    xs = np.empty((ns, x.size))
    vs = np.empty_like(xs)
    fs = np.empty((ns, x.size, n))
    ys = yds = rs = None
    if with_jacobi:
        ys = np.empty((ns, n, k))
        yds = np.empty_like(ys)
        rs = np.empty((ns, n, n))
    radius = model.chart_radius
    slot = 0
    for step in range(nsteps + 1):
        k1 = _chart_deriv(model, x, v, f, y, yd, with_jacobi)
        if slot < ns and keep[slot] == step:
            xs[slot], vs[slot], fs[slot] = x, v, f
            if with_jacobi:
                ys[slot], yds[slot], rs[slot] = y, yd, k1[5]
            slot += 1
        if step == nsteps:
            break
        stages = [k1]
        for frac in (0.5, 0.5, 1.0):
            prev = stages[-1]
            hs = frac * h
            stages.append(_chart_deriv(
                model, x + hs * prev[0], v + hs * prev[1], f + hs * prev[2],
                y + hs * prev[3] if with_jacobi else y,
                yd + hs * prev[4] if with_jacobi else yd,
                with_jacobi))
        k1, k2, k3, k4 = stages

        def comb(i):
            return h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])

        x, v, f = x + comb(0), v + comb(1), f + comb(2)
        if with_jacobi:
            y, yd = y + comb(3), yd + comb(4)
        if not np.linalg.norm(x) < radius:
            raise ChartEscapeError(f"trajectory left the chart at step {step + 1}")
    return xs, vs, fs, ys, yds, rs
