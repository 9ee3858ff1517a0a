"""Pass/fail numerical experiments for stability, instability and the eigenvalue sign.

Each experiment takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentReport` made of named checks. A check is either gated
(it decides the verdict) or reported for information only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (Field, Grid, default_epsilon, discrete_equilibrium, distance_metrics,
                       integrate_batch, monotonicity_violation)
from .errors import DomainError, NoBranch
from .model import ModelParams, RegularizedAlbedo
from .spectral import EigenProblem, principal_eigenvalue
from .stationary import (BranchTag, build_barriers, build_free_boundary_solution,
                         build_ice_covered, compute_critical, solve_free_boundaries)

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "Check",
    "run_stability",
    "run_instability",
    "run_eigen_consistency",
    "lambda_at_fraction",
    "to_jsonable",
]


def lambda_at_fraction(params: ModelParams, frac: float) -> float:
    crit = compute_critical(params)
    return crit.lambda1 + frac * (crit.lambda2 - crit.lambda1)


@dataclass(frozen=True)
class ExperimentConfig:
    """Inputs of one experiment.

    ``None`` for ``theta``, ``delta``, ``dt`` or ``t_final`` selects the
    experiment's own default, and the realized value is echoed in the report.
    """

    params: ModelParams
    theta: float | None = None
    delta: float | None = None
    n: int = 2000
    dt: float | None = None
    t_final: float | None = None
    seed: int = 0
    snapshot_every: int = 500
    tolerances: dict = field(default_factory=dict)

    def tol(self, name, default):
        return float(self.tolerances.get(name, default))

    @classmethod
    def at_fraction(cls, omega=1.0, mu=1.0, f0=0.5, frac=0.5, **kw) -> "ExperimentConfig":
        p = ModelParams(omega, mu, f0, 1.0)
        return cls(p.with_lambda(lambda_at_fraction(p, frac)), **kw)

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "theta": self.theta, "delta": self.delta,
                "n": self.n, "dt": self.dt, "t_final": self.t_final, "seed": self.seed,
                "snapshot_every": self.snapshot_every, "tolerances": dict(self.tolerances)}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["params"] = ModelParams.from_dict(d["params"])
        return cls(**d)


@dataclass
class Check:
    passed: bool
    gated: bool = True
    value: object = None
    threshold: object = None
    note: str = ""


@dataclass
class ExperimentReport:
    name: str
    config: dict
    checks: dict
    measured: dict
    gated: bool = True

    @property
    def verdict(self) -> str:
        if not self.gated:
            return "ungated"
        ok = all(c.passed for c in self.checks.values() if c.gated)
        return "pass" if ok else "fail"

    @property
    def passed(self) -> bool:
        return self.verdict != "fail"

    def to_dict(self) -> dict:
        return to_jsonable({
            "name": self.name, "verdict": self.verdict, "gated": self.gated,
            "config": self.config,
            "checks": {k: vars(c) for k, c in self.checks.items()},
            "measured": self.measured,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)


def to_jsonable(obj):
    """Plain-Python copy of ``obj``; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, BranchTag):
        return str(obj)
    return obj


def _branch(params: ModelParams, tag: BranchTag):
    crit = compute_critical(params)
    for t, x in solve_free_boundaries(params, crit):
        if t is tag:
            return build_free_boundary_solution(params, x, t, crit)
    raise NoBranch(f"no {tag} branch at lambda={params.lam!r}")


def _sample(grid: Grid, values) -> Field:
    return Field(grid, np.asarray(values, dtype=float))


def _smooth_shapes(rng, x, count, modes=6):
    """Random combinations of the first cosine modes, normalized to sup 1."""
    out = []
    for _ in range(count):
        c = rng.uniform(-1.0, 1.0, modes)
        s = sum(ck * np.cos((k + 0.5) * math.pi * x) for k, ck in enumerate(c))
        out.append(s / np.max(np.abs(s)))
    return out


# --- stability ----------------------------------------------------------------

def run_stability(config: ExperimentConfig) -> ExperimentReport:
    """Trajectories started near the upper equilibrium stay between the barriers.

    The battery holds eight initial data within ``eps/2`` of the equilibrium,
    built as fractions of the barrier gaps so they lie strictly inside the
    order interval. The barriers themselves are run as well and reported
    without gating.
    """
    p = config.params
    crit = compute_critical(p)
    if p.lam <= crit.lambda1:
        raise NoBranch(f"stability needs lambda > lambda1={crit.lambda1!r}")
    theta = config.theta if config.theta is not None else 1e-2 * p.lam
    delta = config.delta if config.delta is not None else 1e-3 * p.mu
    t_final = config.t_final if config.t_final is not None else 50.0
    grid = Grid(config.n)
    dt = config.dt if config.dt is not None else grid.dx
    bp = build_barriers(p, theta, delta)
    eq = bp.equilibrium
    eps = bp.epsilon
    x = grid.x
    ub, hi, lo = eq.u(x), bp.upper.u(x), bp.lower.u(x)
    gap_hi, gap_lo = hi - ub, ub - lo
    mingap = float(min(np.min(gap_hi), np.min(gap_lo)))
    rng = np.random.default_rng(config.seed)

    bump = np.exp(-((x - eq.x_fb) / 0.1) ** 2)
    battery = {
        "equilibrium": ub,
        "upper_fraction": ub + 0.45 * gap_hi,
        "lower_fraction": ub - 0.45 * gap_lo,
        "bump_up": ub + 0.4 * mingap * bump,
        "bump_down": ub - 0.4 * mingap * bump,
    }
    for k, s in enumerate(_smooth_shapes(rng, x, 3)):
        battery[f"random_{k}"] = ub + 0.45 * np.where(s > 0, s * gap_hi, s * gap_lo)
    names = list(battery)
    fields = [_sample(grid, v) for v in battery.values()]
    fields += [_sample(grid, hi), _sample(grid, lo)]
    reg = RegularizedAlbedo(p, default_epsilon(grid, p, eq.du(eq.x_fb, "left")))
    trajs = integrate_batch(fields, p, reg, dt, t_final, config.snapshot_every, bounds=(lo, hi))
    ub_field = _sample(grid, ub)

    checks, per = {}, {}
    for name, f0_, tr in zip(names + ["upper_barrier", "lower_barrier"], fields, trajs):
        start = distance_metrics(f0_, ub_field)[0]
        lo_m = float(np.nanmin(tr.diagnostics["lower_margin"]))
        hi_m = float(np.nanmin(tr.diagnostics["upper_margin"]))
        dist = max(distance_metrics(s, ub_field)[0] for s in tr.snapshots)
        final = distance_metrics(tr.final, ub_field)
        per[name] = {"initial_distance": start, "min_lower_margin": lo_m,
                     "min_upper_margin": hi_m, "max_distance": dist, "final_distance": final,
                     "converged_time": tr.converged_time}
        barrier = name.endswith("barrier")
        if barrier:
            direction = "down" if name == "upper_barrier" else "up"
            per[name]["monotone_violation"] = monotonicity_violation(tr, direction)
            checks[f"{name}_stays_in_closure"] = Check(
                min(lo_m, hi_m) >= -config.tol("barrier_closure", 10 * reg.epsilon), False,
                min(lo_m, hi_m), 0.0, "barriers are not strict; reported only")
            continue
        checks[f"{name}_initial_within_half_eps"] = Check(start < eps / 2, True, start, eps / 2)
        checks[f"{name}_stays_in_E"] = Check(min(lo_m, hi_m) > 0, True, min(lo_m, hi_m), 0.0)
        checks[f"{name}_distance_below_3eps"] = Check(dist < 3 * eps, True, dist, 3 * eps)

    realized = replace(config, theta=theta, delta=delta, t_final=t_final, dt=dt).to_dict()
    measured = {"epsilon": eps, "epsilon_reg": reg.epsilon, "x_fb": eq.x_fb,
                "min_gap": mingap, "runs": per, "seed": config.seed}
    return ExperimentReport("stability", realized, checks, measured)


# --- instability --------------------------------------------------------------

def _track_monotone(tr, sign, tol):
    """Largest move of the single crossing against ``sign`` while one crossing exists."""
    fb = np.where(tr.fb_count == 1, tr.fb_x, np.nan)
    d = np.diff(fb)
    d = d[np.isfinite(d)]
    return float(max(0.0, np.max(-sign * d))) if d.size else 0.0, bool(np.all(tr.fb_count <= 1))


def run_instability(config: ExperimentConfig, theta_check: bool = True) -> ExperimentReport:
    """Two nearby starts around the lower equilibrium end at different equilibria.

    Run A starts from the lower solution at ``lambda - theta`` and climbs to
    the upper equilibrium; Run B starts from the lower solution at
    ``lambda + theta`` and falls to the ice-covered one. At ``lambda = lambda2``
    Run B has no admissible start and the report is ungated.
    """
    p = config.params
    crit = compute_critical(p)
    lam = p.lam
    if not crit.lambda1 < lam <= crit.lambda2 * (1 + 1e-12):
        raise NoBranch(f"instability needs lambda in (lambda1, lambda2], got {lam!r}")
    at_lambda2 = math.isclose(lam, crit.lambda2, rel_tol=1e-10)
    theta = config.theta if config.theta is not None else 0.02 * (crit.lambda2 - crit.lambda1)
    if lam - theta <= crit.lambda1:
        raise NoBranch(f"lambda - theta = {lam - theta!r} is not above lambda1")
    grid = Grid(config.n)
    dt = config.dt if config.dt is not None else grid.dx
    t_final = config.t_final if config.t_final is not None else 50.0 / p.omega**2
    x = grid.x
    tol_scale = config.tol("distance", 1e-3) * p.mu

    if at_lambda2:
        from .stationary import _free_boundary_profile
        prof = _free_boundary_profile(p.omega, p.mu, lam, lam * p.f0, 0.0)
        # The crossing sits on the symmetry axis with zero slope.
        lower_u, slope = prof.u(x), None
    else:
        lower = _branch(p, BranchTag.LOWER)
        lower_u, slope = lower.u(x), abs(lower.du(lower.x_fb, "left"))
    upper = _branch(p, BranchTag.UPPER)
    start_a = _branch(p.with_lambda(lam - theta), BranchTag.LOWER).u(x)
    runs = {"A": start_a}
    if lam + theta < crit.lambda2:
        runs["B"] = _branch(p.with_lambda(lam + theta), BranchTag.LOWER).u(x)
    reg = RegularizedAlbedo(p, default_epsilon(grid, p, slope))
    mono_tol = config.tol("monotone", 10.0) * reg.epsilon
    fb_tol = config.tol("fb_track", 1.0) * grid.dx
    fields = [_sample(grid, v) for v in runs.values()]
    trajs = dict(zip(runs, integrate_batch(fields, p, reg, dt, t_final, config.snapshot_every)))
    ub_f = _sample(grid, upper.u(x))

    checks, measured = {}, {"epsilon_reg": reg.epsilon, "theta": theta}
    gap_a = start_a[:-1] - lower_u[:-1]
    eps_a = float(np.max(np.abs(start_a - lower_u)))
    checks["A_start_above_lower"] = Check(bool(np.all(gap_a > 0)), True, float(np.min(gap_a)), 0.0)
    tr = trajs["A"]
    viol = monotonicity_violation(tr, "up")
    checks["A_monotone_up"] = Check(viol <= mono_tol, True, viol, mono_tol)
    over = max(float(np.max(s.values - ub_f.values)) for s in tr.snapshots)
    checks["A_below_upper"] = Check(over <= mono_tol, True, over, mono_tol)
    back, single = _track_monotone(tr, 1.0, fb_tol)
    checks["A_fb_nondecreasing"] = Check(back <= fb_tol and single, True, back, fb_tol)
    dA = distance_metrics(tr.final, ub_f)
    for name, v in zip(("Linf", "L2", "H1"), dA):
        checks[f"A_final_{name}_to_upper"] = Check(v < tol_scale, True, v, tol_scale)
    measured["A"] = {"initial_distance_to_lower": eps_a, "final_distance": dA,
                     "fb_start": float(tr.fb_x[0]), "fb_end": float(tr.fb_x[-1]),
                     "upper_x_fb": upper.x_fb, "converged_time": tr.converged_time,
                     "monotone_violation": viol}

    if "B" in trajs:
        ice = build_ice_covered(p)
        ice_f = _sample(grid, ice.u(x))
        start_b = runs["B"]
        eps_b = float(np.max(np.abs(start_b - lower_u)))
        tr = trajs["B"]
        viol = monotonicity_violation(tr, "down")
        checks["B_start_below_lower"] = Check(bool(np.all(start_b[:-1] < lower_u[:-1])), True,
                                              float(np.max(start_b[:-1] - lower_u[:-1])), 0.0)
        checks["B_monotone_down"] = Check(viol <= mono_tol, True, viol, mono_tol)
        under = max(float(np.max(ice_f.values - s.values)) for s in tr.snapshots)
        checks["B_above_ice_covered"] = Check(under <= mono_tol, True, under, mono_tol)
        back, single = _track_monotone(tr, -1.0, fb_tol)
        present = tr.fb_count > 0
        vanished = bool(not present[-1])
        if vanished and present.any():
            # once gone, the crossing must not come back
            last = int(np.flatnonzero(present)[-1])
            vanished = not present[last + 1:].any()
        checks["B_fb_decreasing"] = Check(back <= fb_tol and single, True, back, fb_tol)
        checks["B_fb_vanishes"] = Check(vanished, True, int(tr.fb_count[-1]), 0)
        dB = distance_metrics(tr.final, ice_f)
        for name, v in zip(("Linf", "L2", "H1"), dB):
            checks[f"B_final_{name}_to_ice_covered"] = Check(v < tol_scale, True, v, tol_scale)
        start_gap = float(np.max(np.abs(start_a - start_b)))
        end_gap = float(np.max(np.abs(ub_f.values - ice_f.values)))
        floor = p.mu - ice.sup_norm
        epsilon = max(eps_a, eps_b)
        checks["witness_start_within_2eps"] = Check(start_gap <= 2 * epsilon, True, start_gap,
                                                    2 * epsilon)
        checks["witness_end_separation"] = Check(end_gap > floor > 0, True, end_gap, floor)
        measured["B"] = {"initial_distance_to_lower": eps_b, "final_distance": dB,
                         "fb_start": float(tr.fb_x[0]), "converged_time": tr.converged_time,
                         "fb_vanish_time": _vanish_time(tr), "monotone_violation": viol}
    else:
        measured["B"] = {"skipped": f"no lower branch at lambda + theta = {lam + theta!r}"}

    if theta_check and not at_lambda2:
        half = _branch(p.with_lambda(lam - theta / 2), BranchTag.LOWER).u(x)
        ratio = eps_a / float(np.max(np.abs(half - lower_u)))
        checks["theta_continuity"] = Check(1.0 <= ratio <= 4.0, True, ratio, [1.0, 4.0],
                                           "halving theta halves the start distance within a factor 2")

    realized = replace(config, theta=theta, dt=dt, t_final=t_final).to_dict()
    return ExperimentReport("instability", realized, checks, measured, gated=not at_lambda2)


def _vanish_time(tr):
    idx = np.flatnonzero(tr.fb_count > 0)
    if idx.size == 0:
        return float(tr.diagnostics["time"][0])
    if idx[-1] + 1 >= tr.fb_count.size:
        return None
    return float(tr.diagnostics["time"][idx[-1] + 1])


# --- eigenvalue vs dynamics ---------------------------------------------------

def _l2(grid, v):
    return float(np.sqrt(grid.dx * np.sum(grid.weights * v**2)))


def _growth(grid, trajs, base):
    """``log`` of the L2 distance to ``base`` per snapshot, one row per trajectory."""
    return np.array([[math.log(max(_l2(grid, s.values - base), 1e-300)) for s in tr.snapshots]
                     for tr in trajs])


def run_eigen_consistency(config: ExperimentConfig, random_shapes: int = 5) -> ExperimentReport:
    """Compare the sign and size of the principal eigenvalue with the flow.

    The flow is started at the discrete lower equilibrium plus a small
    multiple of the computed eigenfunction, and its early growth rate is
    compared with ``-eta1`` over one predicted e-folding time. The same is
    done with the point-mass strength divided by ``|u'(x_fb)|``, which is
    the linearization the regularized flow actually has; that comparison is
    reported but not gated.
    """
    p = config.params
    if not 0 < p.omega < 1:
        raise DomainError("the eigenvalue route is only claimed for 0 < omega < 1")
    crit = compute_critical(p)
    if not crit.lambda1 < p.lam < crit.lambda2:
        raise NoBranch("eigen consistency needs lambda strictly inside (lambda1, lambda2)")
    grid = Grid(config.n)
    dt = config.dt if config.dt is not None else grid.dx
    x = grid.x
    rng = np.random.default_rng(config.seed)
    lower = _branch(p, BranchTag.LOWER)
    upper = _branch(p, BranchTag.UPPER)
    res = principal_eigenvalue(EigenProblem.from_solution(lower))
    res_sw = principal_eigenvalue(EigenProblem.from_solution(lower, slope_weighted=True))
    eta, eta_sw = res.eta1, res_sw.eta1

    checks = {
        "eta1_negative": Check(eta < 0, True, eta, 0.0),
        "methods_agree": Check(abs(res.eta1_shooting - res.eta1_matrix) < config.tol("methods", 1e-3),
                               True, abs(res.eta1_shooting - res.eta1_matrix), config.tol("methods", 1e-3)),
    }
    reg = RegularizedAlbedo(p, default_epsilon(grid, p, lower.du(lower.x_fb, "left")))
    eq = discrete_equilibrium(grid, p, reg, _sample(grid, lower.u(x)))
    t_e = 1.0 / abs(eta) if eta < 0 else 1.0
    t_final = config.t_final if config.t_final is not None else t_e
    sigma_max = max(-eta, -eta_sw, 1.0)
    amp = max(1e-2 * reg.epsilon * math.exp(-sigma_max * t_final), 1e-12 * p.mu)

    shape = np.interp(x, res.x, res.eigenfunction)
    shapes = [shape] + _smooth_shapes(rng, x, random_shapes)
    fields = []
    for s in shapes:
        s = s.copy()
        s[-1] = 0.0
        fields.append(_sample(grid, eq.values + amp * s / _l2(grid, s)))
    trajs = integrate_batch(fields, p, reg, dt, t_final, 1)
    logs = _growth(grid, trajs, eq.values)
    times = trajs[0].diagnostics["time"]
    rate = float((logs[0, -1] - logs[0, 0]) / (times[-1] - times[0]))
    ratio = rate / -eta if eta < 0 else float("nan")
    band = config.tol("rate_band", 3.0)
    checks["growth_positive"] = Check(rate > 0, True, rate, 0.0)
    checks["growth_rate_matches_eta1"] = Check(1 / band <= ratio <= band, True, ratio,
                                               [1 / band, band])
    ratio_sw = rate / -eta_sw if eta_sw < 0 else float("nan")
    checks["growth_rate_matches_slope_weighted_eta1"] = Check(
        1 / band <= ratio_sw <= band, False, ratio_sw, [1 / band, band],
        "strength lambda (1 - f0) / |u'(x_fb)|; reported only")
    growth = logs[:, -1] - logs[:, 0]
    checks["eigen_shape_grows_fastest"] = Check(bool(np.all(growth[0] >= growth[1:])), True,
                                                growth.tolist(), None)

    # Upper branch: the same protocol must decay.
    reg_u = RegularizedAlbedo(p, default_epsilon(grid, p, upper.du(upper.x_fb, "left")))
    eq_u = discrete_equilibrium(grid, p, reg_u, _sample(grid, upper.u(x)))
    pert = np.cos(0.5 * math.pi * x)
    start = _sample(grid, eq_u.values + 1e-2 * reg_u.epsilon * pert / _l2(grid, pert))
    t_up = config.tol("upper_time", 2.0)
    tr_u = integrate_batch([start], p, reg_u, dt, t_up, max(1, int(round(t_up / dt))))[0]
    d0, d1 = _l2(grid, start.values - eq_u.values), _l2(grid, tr_u.final.values - eq_u.values)
    checks["upper_perturbation_decays"] = Check(d1 < d0, True, d1 / d0, 1.0)

    measured = {
        "eta1": eta, "tau": res.tau, "eta1_shooting": res.eta1_shooting,
        "eta1_matrix": res.eta1_matrix, "eta1_slope_weighted": eta_sw,
        "slope_at_free_boundary": abs(lower.du(lower.x_fb, "left")),
        "x_fb": lower.x_fb, "epsilon_reg": reg.epsilon, "amplitude": amp,
        "efold_time": t_e, "measured_rate": rate, "rate_ratio": ratio,
        "rate_ratio_slope_weighted": ratio_sw, "log_growth": growth.tolist(), "seed": config.seed,
        "upper_decay_factor": d1 / d0,
    }
    realized = replace(config, dt=dt, t_final=t_final).to_dict()
    return ExperimentReport("eigen_consistency", realized, checks, measured)
