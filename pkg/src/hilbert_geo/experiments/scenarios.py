"""Named scenarios and the dimension-sweep driver.

Every scenario maps one truncation dimension ``N`` to a list of :class:`Row`
objects, each carrying its own reference value and provenance tag.  A few
scenarios also add sweep-level rows once all dimensions are done (for
example the monotonicity of the distance sweep).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .. import kernels
from ..errors import ConfigError
from ..jacobi import (
    ambrose_drift,
    constant_curvature_closed_form,
    fredholm_residual,
    jacobi_flow,
    lagrangian_residual,
    omega_defect,
    scan_conjugate,
    sigma_min_at,
    symplectic_flow,
    transpose_residual,
)
from ..manifolds import (
    conformal_ball,
    flat,
    grossman_ellipsoid,
    grossman_sphere,
    random_point,
    random_tangent,
    unit_sphere,
)
from ..transport import IsometryDescriptor, displacement, distance_between, geodesic_ivp
from .config import ScenarioConfig
from .report import CHECK_ABOVE, CHECK_BELOW, Row, SweepResult, emit_report, failed_row


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    run_dim: Callable
    tolerances: dict
    t_end: float | None = None
    finalize: Callable | None = None
    extra: dict = field(default_factory=dict)


def _unit(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


def _tol(cfg: ScenarioConfig, sc: Scenario, name: str) -> float:
    return cfg.tolerances.get(name, sc.tolerances[name])


def _t_end(cfg: ScenarioConfig, sc: Scenario) -> float:
    return cfg.t_end if cfg.t_end is not None else sc.t_end


# -- oracles ----------------------------------------------------------------------------


def ellipse_half_perimeter(b: float) -> float:
    """Half perimeter of the ellipse with semi-axes 1 and ``b``, by adaptive quadrature."""
    val, _ = quad(lambda th: math.sqrt(math.sin(th) ** 2 + (b * math.cos(th)) ** 2), 0.0, math.pi,
                  epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def grossman_distance_oracle(n: int) -> float:
    """Length of the shorter half of the ellipse ``x_1^2 + a_n x_n^2 = 1``."""
    return ellipse_half_perimeter(n / (n - 1.0))


def epilimit_oracle(n: int) -> float:
    return n * math.sin(math.pi / n) / (n - 1.0)


# -- per-dimension runners ---------------------------------------------------------------


def _sphere_conjugate(cfg, sc, n):
    name = sc.name
    tol = _tol(cfg, sc, "conjugate_instant")
    prov = "closed-form: round sphere, first conjugate instant pi"
    try:
        m = unit_sphere(n)
        path = geodesic_ivp(m, _unit(n, 0), _unit(n, 1), _t_end(cfg, sc), step=cfg.step)
        report = scan_conjugate(jacobi_flow(m, path))
        if not report.instants:
            raise RuntimeError("no conjugate instant found")
        first = report.instants[0]
    except Exception as exc:
        return [failed_row(name, n, "conjugate_instant", math.pi, tol, prov, exc)]
    return [
        Row(name, n, "conjugate_instant", first.t, math.pi, tol, prov),
        Row(name, n, "multiplicity", float(first.multiplicity), float(n - 2),
            _tol(cfg, sc, "multiplicity"),
            "closed-form: every normal direction of the (N-1)-dim tangent space"),
    ]


_CURVATURE_MODELS = ((1.0, "+1", unit_sphere), (0.0, "0", flat), (-1.0, "-1", conformal_ball))


def _constant_curvature(cfg, sc, n):
    name = sc.name
    tol = _tol(cfg, sc, "T_closed_form")
    t_end = _t_end(cfg, sc)
    rng = np.random.default_rng([cfg.seed, n])
    rows = []
    for k0, label, ctor in _CURVATURE_MODELS:
        obs = f"T_closed_form[K0={label}]"
        prov = f"closed-form: constant curvature {label} ({'sin' if k0 > 0 else 'sinh' if k0 < 0 else 't'})"
        try:
            m = ctor(n)
            p = random_point(m, rng)
            v = random_tangent(m, p, rng)
            flow = jacobi_flow(m, geodesic_ivp(m, p, v, t_end, step=cfg.step))
            normal = constant_curvature_closed_form(k0, flow.times)
            ref = np.zeros_like(flow.T)
            ref[:, 0, 0] = flow.times
            d = np.arange(1, ref.shape[1])
            ref[:, d, d] = normal[:, None]
            err = float(np.abs(flow.T - ref).max())
        except Exception as exc:
            rows.append(failed_row(name, n, obs, 0.0, tol, prov, exc, t=t_end))
            continue
        rows.append(Row(name, n, obs, err, 0.0, tol, prov, t=t_end))
    return rows


def _grossman_accumulation(cfg, sc, n):
    name = sc.name
    tol = _tol(cfg, sc, "conjugate_instant")
    t_end = _t_end(cfg, sc)
    prov = "closed-form: q_k = k pi/(k-1)"
    expected = [(k, k * math.pi / (k - 1)) for k in range(3, n + 1)
                if k * math.pi / (k - 1) <= t_end]
    try:
        m = grossman_ellipsoid(n)
        path = geodesic_ivp(m, _unit(n, 0), _unit(n, 1), t_end, step=cfg.step)
        instants = scan_conjugate(jacobi_flow(m, path)).instants
    except Exception as exc:
        return [failed_row(name, n, f"conjugate_instant[k={k}]", q, tol, prov, exc)
                for k, q in expected]
    rows, used = [], set()
    for k, q in expected:
        obs = f"conjugate_instant[k={k}]"
        if not instants:
            rows.append(failed_row(name, n, obs, q, tol, prov, RuntimeError("no instant found")))
            continue
        j = int(np.argmin([abs(c.t - q) for c in instants]))
        used.add(j)
        c = instants[j]
        err = None if c.multiplicity == 1 else f"multiplicity {c.multiplicity}, expected 1"
        rows.append(Row(name, n, obs, c.t, q, tol, prov, error=err))
    for j, c in enumerate(instants):
        if j not in used:
            rows.append(Row(name, n, "unexpected_instant", c.t, math.nan, tol, prov,
                            error="instant not predicted by the closed form"))
    return rows


def _grossman_epilimit(cfg, sc, n):
    name = sc.name
    tol = _tol(cfg, sc, "sigma_min_T")
    ref = epilimit_oracle(n)
    prov = "closed-form: N sin(pi/N)/(N-1)"
    try:
        m = grossman_ellipsoid(n)
        path = geodesic_ivp(m, _unit(n, 0), _unit(n, 1), math.pi, step=cfg.step)
        flow = jacobi_flow(m, path)
        sig = sigma_min_at(flow, math.pi)
        sign = np.linalg.slogdet(flow.T[-1])[0]
    except Exception as exc:
        return [failed_row(name, n, "sigma_min_T", ref, tol, prov, exc, t=math.pi)]
    return [
        Row(name, n, "sigma_min_T", sig, ref, tol, prov, t=math.pi),
        Row(name, n, "det_T_nonzero", float(sign != 0), 1.0, 0.0,
            "closed-form: T(pi) injective at finite N", t=math.pi),
    ]


def _grossman_distance(cfg, sc, n):
    name = sc.name
    tol = _tol(cfg, sc, "distance")
    ref = grossman_distance_oracle(n)
    prov = "quadrature: ellipse half-perimeter in the (e_1, e_N) plane"
    try:
        d = distance_between(grossman_sphere(n), _unit(n, 0), -_unit(n, 0), step=cfg.step)
    except Exception as exc:
        return [failed_row(name, n, "distance", ref, tol, prov, exc)]
    return [
        Row(name, n, "distance", d, ref, tol, prov),
        Row(name, n, "distance_exceeds_pi", d, math.pi, 0.0,
            "closed-form: every path is longer than pi", check=CHECK_ABOVE),
    ]


def _grossman_distance_final(cfg, sc, rows):
    dist = sorted((r.N, r.value) for r in rows if r.observable == "distance")
    if not dist:
        return []
    name = sc.name
    n_last, d_last = dist[-1]
    values = [d for _, d in dist]
    decreasing = all(b < a for a, b in zip(values, values[1:])) and all(map(math.isfinite, values))
    return [
        Row(name, n_last, "strictly_decreasing", float(decreasing), 1.0, 0.0,
            "sweep: distances strictly decreasing in N"),
        Row(name, n_last, "distance_near_pi", d_last, math.pi, _tol(cfg, sc, "distance_near_pi"),
            "closed-form: infimum pi is not attained", check=CHECK_BELOW),
    ]


def _clifford(cfg, sc, n):
    name = sc.name
    tol = _tol(cfg, sc, "displacement")
    rng = np.random.default_rng([cfg.seed, n])
    m = unit_sphere(n)
    rows = []
    anti = IsometryDescriptor.antipodal()
    for i in range(sc.extra["points"]):
        obs = f"antipodal_displacement[{i}]"
        prov = "closed-form: antipodal map displaces every point by pi"
        try:
            d = displacement(m, anti, random_point(m, rng), step=cfg.step)
        except Exception as exc:
            rows.append(failed_row(name, n, obs, math.pi, tol, prov, exc))
            continue
        rows.append(Row(name, n, obs, d, math.pi, tol, prov))
    rot = IsometryDescriptor.plane_rotation(1, 2, math.pi / 3)
    for label, idx, ref in (("e3", 2, 0.0), ("e1", 0, math.pi / 3)):
        obs = f"rotation_displacement[{label}]"
        prov = "closed-form: rotation by pi/3 in the (e_1, e_2) plane"
        try:
            d = displacement(m, rot, _unit(n, idx), step=cfg.step)
        except Exception as exc:
            rows.append(failed_row(name, n, obs, ref, tol, prov, exc))
            continue
        rows.append(Row(name, n, obs, d, ref, tol, prov))
    return rows


IDENTITIES = ("ambrose_drift", "omega_defect", "lagrangian", "transpose", "fredholm")

_IDENTITY_MODELS = (
    ("unit_sphere", unit_sphere),
    ("grossman_sphere", grossman_sphere),
    ("grossman_ellipsoid", grossman_ellipsoid),
    ("flat", flat),
    ("conformal_ball", conformal_ball),
)


def identity_residuals(m, p, v, t_end, step, rng) -> dict:
    """All five structural residuals for one geodesic and one pair of Jacobi data."""
    path = geodesic_ivp(m, p, v, t_end, step=step)
    sflow = symplectic_flow(m, path)
    inits = [(random_tangent(m, p, rng, unit=False), random_tangent(m, p, rng, unit=False))
             for _ in range(2)]
    return {
        "ambrose_drift": ambrose_drift(m, path, *inits),
        "omega_defect": omega_defect(sflow),
        "lagrangian": max(lagrangian_residual(sflow, t) for t in (0.5 * t_end, t_end)),
        "transpose": transpose_residual(m, path, t_end),
        "fredholm": fredholm_residual(jacobi_flow(m, path), t_end),
    }


def _identity_suite(cfg, sc, n):
    name = sc.name
    t_end = _t_end(cfg, sc)
    rng = np.random.default_rng([cfg.seed, n])
    per_model = sc.extra["samples"] // len(_IDENTITY_MODELS)
    rows = []
    for label, ctor in _IDENTITY_MODELS:
        worst = dict.fromkeys(IDENTITIES, 0.0)
        failure = None
        try:
            m = ctor(n)
            for _ in range(per_model):
                p = random_point(m, rng)
                v = random_tangent(m, p, rng)
                res = identity_residuals(m, p, v, t_end, cfg.step, rng)
                for key, val in res.items():
                    worst[key] = max(worst[key], val)
        except Exception as exc:
            failure = exc
        for ident in IDENTITIES:
            obs = f"{ident}[{label}]"
            tol = _tol(cfg, sc, ident)
            prov = f"identity: {ident.replace('_', ' ')} (exact value 0, {per_model} samples)"
            if failure is not None:
                rows.append(failed_row(name, n, obs, 0.0, tol, prov, failure, t=t_end))
            else:
                rows.append(Row(name, n, obs, worst[ident], 0.0, tol, prov, t=t_end))
    return rows


SCENARIO_TABLE = {
    sc.name: sc for sc in (
        Scenario("sphere-conjugate",
                 "first conjugate instant and its multiplicity on the round sphere",
                 _sphere_conjugate, {"conjugate_instant": 1e-5, "multiplicity": 0.0}, t_end=6.3),
        Scenario("constant-curvature-oracle",
                 "Jacobi flow against the sin / t / sinh closed forms for K0 = +1, 0, -1",
                 _constant_curvature, {"T_closed_form": 1e-6}, t_end=3.0),
        Scenario("grossman-accumulation",
                 "conjugate instants k pi/(k-1) accumulating at pi on the Grossman ellipsoid",
                 _grossman_accumulation, {"conjugate_instant": 1e-4}, t_end=5.0),
        Scenario("grossman-epilimit-sweep",
                 "sigma_min(T_N(pi)) decay on the Grossman ellipsoid versus N",
                 _grossman_epilimit, {"sigma_min_T": 1e-4}),
        Scenario("grossman-distance-sweep",
                 "d(e_1, -e_1) on the Grossman sphere versus N (infimum pi not attained)",
                 _grossman_distance, {"distance": 1e-3, "distance_near_pi": 0.01},
                 finalize=_grossman_distance_final),
        Scenario("clifford-displacement",
                 "displacement functions of the antipodal map and a plane rotation",
                 _clifford, {"displacement": 1e-5}, extra={"points": 20}),
        Scenario("identity-suite",
                 "Ambrose, symplectic, Lagrangian, transpose and Fredholm residuals",
                 _identity_suite,
                 {"ambrose_drift": 1e-7, "omega_defect": 1e-6, "lagrangian": 1e-8,
                  "transpose": 1e-6, "fredholm": 1e-5},
                 t_end=3.0, extra={"samples": 100}),
    )
}


def _run_one(cfg: ScenarioConfig, n: int) -> list[Row]:
    sc = SCENARIO_TABLE[cfg.scenario]
    return sc.run_dim(cfg, sc, n)


def sweep_dimension(cfg: ScenarioConfig, jobs: int = 1) -> SweepResult:
    """Run ``cfg.scenario`` once per dimension in ``cfg.dims`` and collect the rows.

    With ``jobs > 1`` the dimensions run in separate processes; rows are sorted
    by ``N`` afterwards so the output does not depend on completion order.
    """
    sc = SCENARIO_TABLE[cfg.scenario]
    unknown = sorted(set(cfg.tolerances) - set(sc.tolerances))
    if unknown:
        raise ConfigError(f"{sc.name} has no tolerance named {', '.join(unknown)}; "
                          f"known: {', '.join(sorted(sc.tolerances))}")
    t0 = time.perf_counter()
    if jobs > 1 and len(cfg.dims) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_one, [cfg] * len(cfg.dims), cfg.dims))
    else:
        chunks = [_run_one(cfg, n) for n in cfg.dims]
    rows = [r for chunk in chunks for r in chunk]
    if sc.finalize is not None:
        rows += sc.finalize(cfg, sc, rows)
    result = SweepResult(cfg.scenario, rows)
    result.metadata.update({
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "step": cfg.step,
        "t_end": _t_end(cfg, sc),
        "dims": ",".join(map(str, cfg.dims)),
        "backend": kernels.BACKEND,
        "runtime_s": f"{time.perf_counter() - t0:.3f}",
    })
    return result


def run_scenario(cfg: ScenarioConfig, jobs: int = 1) -> tuple[SweepResult, int]:
    """Run the scenario, write the report if ``cfg.output_path`` is set, return the exit code.

    The exit code is 0 exactly when every row is within its tolerance.
    """
    result = sweep_dimension(cfg, jobs=jobs)
    if cfg.output_path:
        emit_report(result, cfg.output_path)
    return result, result.exit_code
