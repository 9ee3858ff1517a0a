"""Principal eigenvalue of the linearization with a point mass at the free boundary.

The operator is ``-U'' + omega**2 U - c delta_{x_fb} U`` on ``(0, 1)`` with
``U'(0) = 0`` and ``U(1) = 0``, where by default ``c = lambda (1 - f0)``.
Writing ``eta = omega**2 - tau**2`` and using ``cosh(tau x)`` on the left and
``sinh(tau (1 - x))`` on the right, the jump condition collapses to

    D(tau) = tau tanh(tau x_fb) + tau coth(tau (1 - x_fb)) - c = 0.

Two independent routes are provided: shooting on ``D`` and a
mass-lumped finite-difference matrix solved by Sturm-sequence bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError, NoHyperbolicRoot
from .model import ModelParams
from .stationary import (BranchTag, StationarySolution, build_free_boundary_solution,
                         compute_critical, solve_free_boundaries)

__all__ = [
    "EigenProblem",
    "EigenResult",
    "dispersion",
    "dispersion_prime",
    "principal_eigenvalue_shooting",
    "principal_eigenvalue_matrix",
    "principal_eigenvalue",
    "ice_covered_spectrum",
    "lower_branch_problem",
    "instability_sign_scan",
    "SCAN_COLUMNS",
]


@dataclass(frozen=True)
class EigenProblem:
    """Linearization around an equilibrium with free boundary ``x_fb``.

    ``coupling`` is the point-mass strength; ``None`` means ``lambda (1 - f0)``.
    ``x_fb = 0`` is accepted for the boundary case ``lambda = lambda2``.
    """

    params: ModelParams
    x_fb: float
    branch: BranchTag = BranchTag.LOWER
    coupling: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.x_fb < 1.0:
            raise DomainError(f"x_fb must lie in [0, 1), got {self.x_fb}")

    @property
    def strength(self) -> float:
        if self.coupling is not None:
            return self.coupling
        return self.params.lam * (1.0 - self.params.f0)

    @classmethod
    def from_solution(cls, sol: StationarySolution, slope_weighted: bool = False):
        """Problem for ``sol``; ``slope_weighted`` divides the strength by ``|u'(x_fb)|``.

        The slope-weighted strength is what the regularized flow actually
        linearizes to, since ``beta_eps'(u(x))`` integrates to
        ``(1 - f0) / |u'(x_fb)|`` across the ramp.
        """
        c = None
        if slope_weighted:
            c = sol.params.lam * (1.0 - sol.params.f0) / abs(sol.du(sol.x_fb, "left"))
        return cls(sol.params, sol.x_fb, sol.branch, c)


@dataclass(frozen=True)
class EigenResult:
    eta1: float
    tau: float | None
    method: str
    residual: float
    x: np.ndarray
    eigenfunction: np.ndarray
    eta1_shooting: float | None = None
    eta1_matrix: float | None = None

    @property
    def rho(self) -> float:
        return self.eta1


def dispersion(problem: EigenProblem, tau: float) -> float:
    if tau <= 0:
        raise DomainError("tau must be positive")
    s = problem.x_fb
    return tau * math.tanh(tau * s) + tau / math.tanh(tau * (1.0 - s)) - problem.strength


def dispersion_prime(problem: EigenProblem, tau: float) -> float:
    s, r = problem.x_fb, 1.0 - problem.x_fb
    a, b = tau * s, tau * r
    sech2 = 1.0 / math.cosh(a) ** 2 if a < 350 else 0.0
    csch2 = 1.0 / math.sinh(b) ** 2 if b < 350 else 0.0
    return math.tanh(a) + a * sech2 + 1.0 / math.tanh(b) - b * csch2


def _shooting_eigenfunction(problem: EigenProblem, tau: float, x):
    s = problem.x_fb
    left = np.cosh(tau * np.minimum(x, s))
    # cosh(tau s) sinh(tau (1-x)) / sinh(tau (1-s)), written to avoid overflow.
    r = 1.0 - s
    right = (np.cosh(tau * s) * np.exp(-tau * (x - s))
             * (1.0 - np.exp(-2.0 * tau * (1.0 - x))) / (1.0 - math.exp(-2.0 * tau * r)))
    return np.where(x <= s, left, right)


def principal_eigenvalue_shooting(problem: EigenProblem, tol: float = 1e-14,
                                  points: int = 1001) -> EigenResult:
    """Solve ``D(tau) = 0``; ``eta1 = omega**2 - tau**2``.

    Raises
    ------
    NoHyperbolicRoot
        ``D(0+) = 1/(1 - x_fb) - c >= 0``: then ``eta1 >= omega**2``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    c = problem.strength
    s = problem.x_fb
    if 1.0 / (1.0 - s) - c >= 0:
        raise NoHyperbolicRoot(
            f"D(0+) = {1.0 / (1.0 - s) - c:.6g} >= 0: no root with eta1 < omega**2")
    # D(tau) >= tau - c since coth >= 1, so tau = c + 1 brackets from above.
    lo, hi = 1e-12, c + 1.0
    try:
        tau = brentq(lambda t: dispersion(problem, t), lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
    except (ValueError, RuntimeError) as exc:
        raise ConvergenceError("dispersion root not bracketed") from exc
    for _ in range(3):
        d, dp = dispersion(problem, tau), dispersion_prime(problem, tau)
        if dp <= 0:
            break
        t_new = tau - d / dp
        if not t_new > 0 or abs(dispersion(problem, t_new)) >= abs(d):
            break
        tau = t_new
    x = np.linspace(0.0, 1.0, points)
    U = _shooting_eigenfunction(problem, tau, x)
    # Jump residual |U'_- - U'_+ - c U(x_fb)| = cosh(tau x_fb) |D(tau)|.
    residual = math.cosh(tau * s) * abs(dispersion(problem, tau))
    eta = problem.params.omega**2 - tau**2
    return EigenResult(eta, tau, "Shooting", residual, x, U, eta1_shooting=eta)


def principal_eigenvalue_matrix(problem: EigenProblem, n: int = 10_000) -> EigenResult:
    """Smallest eigenvalue of the mass-lumped finite-difference operator.

    The point mass sits on the node nearest ``x_fb`` with weight ``1/dx``
    (``2/dx`` on the half-cell Neumann node, which is what lumping gives).
    The generalized problem is symmetrized with the lumped mass and its
    lowest eigenpair is found by Sturm-sequence bisection.
    """
    if n < 100:
        raise ValueError("n must be >= 100")
    h = 1.0 / n
    w2 = problem.params.omega**2
    mass = np.full(n, h)
    mass[0] = 0.5 * h
    kd = np.full(n, 2.0 / h)
    kd[0] = 1.0 / h
    ke = np.full(n - 1, -1.0 / h)
    j = min(int(round(problem.x_fb / h)), n - 1)
    kd[j] -= problem.strength
    sq = np.sqrt(mass)
    d = kd / mass + w2
    e = ke / (sq[:-1] * sq[1:])
    try:
        vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, 0),
                                      lapack_driver="stebz")
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError("tridiagonal eigensolver failed") from exc
    eta = float(vals[0])
    y = vecs[:, 0]
    resid = float(np.max(np.abs(d * y + np.append(e * y[1:], 0) + np.insert(e * y[:-1], 0, 0) - eta * y)))
    U = np.append(y / sq, 0.0)
    U = U / U[0]
    x = np.arange(n + 1) * h
    return EigenResult(eta, None, "Matrix", resid, x, U, eta1_matrix=eta)


def principal_eigenvalue(problem: EigenProblem, n: int = 10_000) -> EigenResult:
    """Both routes; shooting is reported when it applies, matrix otherwise."""
    mat = principal_eigenvalue_matrix(problem, n)
    try:
        sh = principal_eigenvalue_shooting(problem)
    except NoHyperbolicRoot:
        return mat
    return EigenResult(sh.eta1, sh.tau, "Both", sh.residual, sh.x, sh.eigenfunction,
                       eta1_shooting=sh.eta1, eta1_matrix=mat.eta1)


def ice_covered_spectrum(params: ModelParams, k: int = 0) -> float:
    """``omega**2 + (pi/2 + k pi)**2``: modes of the operator without point mass."""
    return params.omega**2 + (math.pi / 2 + k * math.pi) ** 2


def lower_branch_problem(params: ModelParams, frac: float, branch: BranchTag = BranchTag.LOWER,
                         slope_weighted: bool = False) -> EigenProblem:
    """Problem at ``lambda = lambda1 + frac (lambda2 - lambda1)`` on the given branch.

    At ``frac = 1`` the lower free boundary is the boundary datum ``x = 0``.
    """
    crit = compute_critical(params)
    lam = crit.lambda1 + frac * (crit.lambda2 - crit.lambda1)
    p = params.with_lambda(lam)
    roots = dict(solve_free_boundaries(p, crit))
    if branch is BranchTag.LOWER and BranchTag.LOWER not in roots:
        if BranchTag.FOLD in roots:
            x = roots[BranchTag.FOLD]
        elif frac >= 1.0:
            if slope_weighted:
                raise DomainError("slope weighting is singular at x_fb = 0")
            return EigenProblem(p, 0.0, BranchTag.LOWER)
        else:
            raise DomainError(f"no lower branch at frac={frac}")
    else:
        x = roots.get(branch, roots.get(BranchTag.FOLD))
        if x is None:
            raise DomainError(f"no {branch} branch at frac={frac}")
    if slope_weighted:
        sol = build_free_boundary_solution(p, x, branch, crit)
        return EigenProblem.from_solution(sol, slope_weighted=True)
    return EigenProblem(p, x, branch)


SCAN_COLUMNS = ("omega", "lambda", "branch", "x_fb", "eta1", "tau", "method", "residual",
                "eta1_matrix", "status")


def instability_sign_scan(mu: float, f0: float, omega_list, lambda_fractions,
                          n: int = 10_000, include_upper: bool = True) -> list[dict]:
    """Sign of ``eta1`` on the lower (and upper) branch over an ``(omega, frac)`` table.

    Rows are ordered by ``(omega, frac, branch)``; a failed cell carries an
    error message in ``status`` instead of being dropped.
    """
    rows = []
    for w in omega_list:
        params = ModelParams(w, mu, f0, 1.0)
        for frac in lambda_fractions:
            branches = [BranchTag.LOWER] + ([BranchTag.UPPER] if include_upper else [])
            for br in branches:
                row = dict.fromkeys(SCAN_COLUMNS)
                row.update(omega=w, branch=str(br))
                try:
                    prob = lower_branch_problem(params, frac, br)
                    row.update(**{"lambda": prob.params.lam, "x_fb": prob.x_fb})
                    res = principal_eigenvalue(prob, n)
                    row.update(eta1=res.eta1, tau=res.tau, method=res.method,
                               residual=res.residual, eta1_matrix=res.eta1_matrix, status="ok")
                except Exception as exc:  # noqa: BLE001 - recorded per cell
                    row["status"] = f"error: {type(exc).__name__}: {exc}"
                rows.append(row)
    return rows
