"""The (lambda, sup-norm) bifurcation diagram and a check of its S shape.

Every point of every branch is available in closed form, so the tracer just
evaluates the stationary module on a uniform lambda grid with the two
critical values inserted.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ShapeViolation
from .model import ModelParams
from .stationary import (BranchTag, CriticalValues, branch_sup_norm, build_ice_covered,
                         compute_critical, solve_free_boundaries)

__all__ = [
    "BifurcationRecord",
    "BifurcationCurve",
    "ShapeReport",
    "trace",
    "verify_s_shape",
    "fold_gaps",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("lambda", "branch", "sup_norm", "x_fb", "status")
_ORDER = {BranchTag.ICE_COVERED: 0, BranchTag.LOWER: 1, BranchTag.FOLD: 2, BranchTag.UPPER: 3}


@dataclass(frozen=True)
class BifurcationRecord:
    lam: float
    branch: BranchTag
    sup_norm: float
    x_fb: float | None
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def row(self) -> dict:
        return {"lambda": self.lam, "branch": str(self.branch), "sup_norm": self.sup_norm,
                "x_fb": self.x_fb, "status": self.status}


@dataclass
class BifurcationCurve:
    """Records sorted by ``(lambda, branch)``; ``branch()`` gives one branch in lambda order."""

    records: list
    critical: CriticalValues
    params: ModelParams

    def branch(self, tag: BranchTag, ok_only: bool = True) -> list:
        return [r for r in self.records if r.branch is tag and (r.ok or not ok_only)]

    def lower_sequence(self) -> list:
        """Fold point, then the decreasing branch up to its endpoint at lambda2."""
        return self.branch(BranchTag.FOLD) + self.branch(BranchTag.LOWER)

    def upper_sequence(self) -> list:
        return self.branch(BranchTag.FOLD) + self.branch(BranchTag.UPPER)

    @property
    def failures(self) -> list:
        return [r for r in self.records if not r.ok]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([_fmt(r.lam), str(r.branch), _fmt(r.sup_norm),
                        "" if r.x_fb is None else _fmt(r.x_fb), r.status])
        return buf.getvalue()


def _fmt(v: float) -> str:
    return format(v, ".17g")


def _records_at(params: ModelParams, crit: CriticalValues) -> list:
    lam = params.lam
    out = []
    if lam < crit.lambda2 and not math.isclose(lam, crit.lambda2, rel_tol=1e-10):
        try:
            out.append(BifurcationRecord(lam, BranchTag.ICE_COVERED,
                                         build_ice_covered(params).sup_norm, None))
        except Exception as exc:  # noqa: BLE001 - recorded, not dropped
            out.append(_failed(lam, BranchTag.ICE_COVERED, exc))
    try:
        roots = solve_free_boundaries(params, crit)
    except Exception as exc:  # noqa: BLE001
        return out + [_failed(lam, BranchTag.UPPER, exc)]
    for tag, x in roots:
        try:
            out.append(BifurcationRecord(lam, tag, branch_sup_norm(params, x), x))
        except Exception as exc:  # noqa: BLE001
            out.append(_failed(lam, tag, exc))
    if lam == crit.lambda2:
        # The lower root has reached the pole: u(0) = mu with x_fb = 0.
        out.append(BifurcationRecord(lam, BranchTag.LOWER, branch_sup_norm(params, 0.0), 0.0))
    return out


def _failed(lam, tag, exc) -> BifurcationRecord:
    return BifurcationRecord(lam, tag, float("nan"), None, f"error: {type(exc).__name__}: {exc}")


def trace(omega: float, mu: float, f0: float, lambda_min: float, lambda_max: float,
          steps: int, refine_fold: bool = True) -> BifurcationCurve:
    """Sample every branch on ``linspace(lambda_min, lambda_max, steps)``.

    ``lambda1`` and ``lambda2`` are inserted exactly when they fall in range.
    With ``refine_fold`` the points ``lambda1 (1 + 2**-k)``, ``k = 1..20``, are
    added to resolve the square-root fold.
    """
    if not 0 < lambda_min < lambda_max:
        raise ValueError("need 0 < lambda_min < lambda_max")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    base = ModelParams(omega, mu, f0, 1.0)
    crit = compute_critical(base)
    grid = set(np.linspace(lambda_min, lambda_max, steps).tolist())
    for lc in (crit.lambda1, crit.lambda2):
        if lambda_min <= lc <= lambda_max:
            grid.add(lc)
    if refine_fold:
        for k in range(1, 21):
            lam = crit.lambda1 * (1.0 + 2.0**-k)
            if lambda_min <= lam <= lambda_max:
                grid.add(lam)
    records = []
    for lam in sorted(grid):
        records.extend(_records_at(base.with_lambda(lam), crit))
    records.sort(key=lambda r: (r.lam, _ORDER[r.branch]))
    return BifurcationCurve(records, crit, base)


def fold_gaps(params: ModelParams, offsets=(1e-2, 1e-3, 1e-4)) -> list:
    """``(h, gamma_upper - gamma_lower)`` at ``lambda1 (1 + h)``."""
    crit = compute_critical(params)
    out = []
    for h in offsets:
        p = params.with_lambda(crit.lambda1 * (1.0 + h))
        roots = dict(solve_free_boundaries(p, crit))
        gap = branch_sup_norm(p, roots[BranchTag.UPPER]) - branch_sup_norm(p, roots[BranchTag.LOWER])
        out.append((h, gap))
    return out


@dataclass
class ShapeReport:
    passed: bool
    checks: dict
    gamma_lower_at_lambda1: float | None
    gamma_lower_at_lambda2: float | None
    fold_statement: str
    fold_gaps: list = field(default_factory=list)
    fold_exponent: float | None = None
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _check_monotone(seq, sign, tag):
    for a, b in zip(seq, seq[1:]):
        if not (b.lam > a.lam and sign * (b.sup_norm - a.sup_norm) > 0):
            word = "increasing" if sign > 0 else "decreasing"
            raise ShapeViolation(
                f"{tag} branch not strictly {word} between lambda={a.lam!r} and {b.lam!r}",
                branch=tag, pair=(a.lam, b.lam))


def verify_s_shape(curve: BifurcationCurve, fold_tol: float = 1e-9) -> ShapeReport:
    """Check monotonicity of the three branches and how they join.

    The ice-covered branch must increase, the lower branch (fold point
    first) must decrease and end at ``mu`` at ``lambda2``, and the upper
    branch (fold point first) must increase.

    Raises
    ------
    ShapeViolation
        On the first offending consecutive pair, or a failed joint.
    """
    crit, mu = curve.critical, curve.params.mu
    ice, lower, upper = (curve.branch(BranchTag.ICE_COVERED), curve.lower_sequence(),
                         curve.upper_sequence())
    for tag, seq in (("IceCovered", ice), ("Lower", lower), ("Upper", upper)):
        if len(seq) < 3:
            raise ShapeViolation(f"{tag} branch has fewer than 3 records", branch=tag)
    _check_monotone(ice, 1, "IceCovered")
    _check_monotone(lower, -1, "Lower")
    _check_monotone(upper, 1, "Upper")
    checks = {"ice_increasing": True, "lower_decreasing": True, "upper_increasing": True}

    fold = curve.branch(BranchTag.FOLD)
    g1 = fold[0].sup_norm if fold else None
    checks["fold_sampled"] = bool(fold)
    if fold:
        # Both branches must start from the same fold point.
        checks["fold_shared"] = lower[0] is upper[0]
    end = [r for r in curve.branch(BranchTag.LOWER) if r.lam == crit.lambda2]
    g2 = end[0].sup_norm if end else None
    if end:
        if abs(g2 - mu) > fold_tol * mu:
            raise ShapeViolation(f"lower branch ends at {g2!r}, not mu={mu!r}",
                                 branch="Lower", pair=(end[0].lam, end[0].lam))
        checks["lower_meets_mu_at_lambda2"] = True
    if g1 is not None:
        checks["fold_value_above_mu"] = g1 > mu
        if not g1 > mu:
            raise ShapeViolation(f"fold value {g1!r} is not above mu", branch="Fold")
    if g1 is None:
        statement = "fold not sampled"
    elif math.isclose(g1, mu, rel_tol=1e-9):
        statement = "u(0) = mu at the fold"
    else:
        statement = f"u(0) = {g1!r} > mu at the fold; the alternative statement u(0) = mu does not hold"
    gaps = fold_gaps(curve.params)
    exponent = None
    if all(g > 0 for _, g in gaps):
        hs, gs = np.log([h for h, _ in gaps]), np.log([g for _, g in gaps])
        exponent = float(np.polyfit(hs, gs, 1)[0])
    checks["no_failed_points"] = not curve.failures
    checks["fold_gap_decreasing"] = all(b[1] < a[1] for a, b in zip(gaps, gaps[1:]))
    return ShapeReport(all(checks.values()), checks, g1, g2, statement, gaps, exponent,
                       [r.row() for r in curve.failures])
