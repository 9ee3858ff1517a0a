"""Closed-form monotone equilibria and the quantities that organize them.

Every monotone stationary solution is built from hyperbolic pieces. On the
ice-free side ``(0, x_fb)`` the forcing is ``lambda``; on the ice-covered
side ``(x_fb, 1)`` it is ``lambda * f0``. Matching the derivative at the
free boundary reduces to the scalar equation ``g(x_fb) = lambda / mu``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError, ConvergenceError, DomainError, NoBranch, TransmissionError
from .model import ModelParams

__all__ = [
    "BranchTag",
    "PiecewiseProfile",
    "StationarySolution",
    "CriticalValues",
    "BarrierPair",
    "g_eval",
    "g_prime",
    "m_f0",
    "solve_r_star",
    "compute_critical",
    "solve_free_boundaries",
    "build_ice_covered",
    "build_free_boundary_solution",
    "sup_norm",
    "branch_sup_norm",
    "build_barriers",
    "verify_h_positive",
    "h_function",
    "enumerate_equilibria",
    "right_piece_closed_form",
    "profile_table",
]

FOLD_RTOL = 1e-10
# Half-width of the exclusion window around r* when bracketing the two roots.
FOLD_GAP = 1e-9
TRANSMISSION_RTOL = 1e-8


class BranchTag(str, enum.Enum):
    ICE_COVERED = "IceCovered"
    LOWER = "Lower"
    UPPER = "Upper"
    FOLD = "Fold"

    def __str__(self):
        return self.value


# --- the transmission function ---------------------------------------------

def _denominator(params: ModelParams, r):
    w, f0 = params.omega, params.f0
    wr = w * r
    return (np.sinh(wr) * np.sinh(w - wr) - f0 * np.cosh(wr)
            + f0 * np.cosh(wr) * np.cosh(w - wr))


def _denominator_prime(params: ModelParams, r):
    w, f0 = params.omega, params.f0
    return w * ((1.0 - f0) * np.sinh(w - 2.0 * w * r) - f0 * np.sinh(w * r))


def g_eval(params: ModelParams, r: float) -> float:
    """``g(r) = omega**2 cosh(omega) / den(r)``; free boundaries solve ``g = lambda/mu``.

    Raises
    ------
    DomainError
        If ``r`` is not in ``(0, 1)``.
    """
    if not 0.0 < r < 1.0:
        raise DomainError(f"g is defined on (0, 1), got r={r}")
    return params.omega**2 * math.cosh(params.omega) / float(_denominator(params, r))


def g_prime(params: ModelParams, r: float) -> float:
    if not 0.0 < r < 1.0:
        raise DomainError(f"g is defined on (0, 1), got r={r}")
    den = float(_denominator(params, r))
    return -params.omega**2 * math.cosh(params.omega) * float(_denominator_prime(params, r)) / den**2


def m_f0(params: ModelParams, r: float) -> float:
    """``asinh(f0/(f0-1) * sinh(omega r)) / omega``; negative for ``r > 0``."""
    if not 0.0 <= r < 1.0:
        raise DomainError(f"m_f0 is defined on [0, 1), got r={r}")
    k = params.f0 / (params.f0 - 1.0)
    return math.asinh(k * math.sinh(params.omega * r)) / params.omega


def solve_r_star(params: ModelParams, tol: float = 1e-15, maxiter: int = 500) -> float:
    """Fold location: the fixed point of ``r -> (m_f0(r) + 1) / 2`` in ``(0, 1)``.

    Plain fixed-point iteration first; if the iterate leaves ``(0, 1)`` or the
    budget runs out, the root of ``den'`` (equivalently of ``g'``) is
    bracketed on ``[0, 1]``, where ``den'`` is strictly decreasing.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    r = 0.5
    for _ in range(maxiter):
        r_new = 0.5 * (m_f0(params, r) + 1.0)
        if not 0.0 < r_new < 1.0:
            break
        if abs(r_new - r) <= tol:
            return r_new
        r = r_new
    try:
        return brentq(lambda s: float(_denominator_prime(params, s)), 0.0, 1.0,
                      xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=400)
    except (ValueError, RuntimeError) as exc:
        raise ConvergenceError(f"r* not found for {params}") from exc


@dataclass(frozen=True)
class CriticalValues:
    lambda1: float
    lambda2: float
    r_star: float

    def to_dict(self):
        return {"lambda1": self.lambda1, "lambda2": self.lambda2, "r_star": self.r_star}


def lambda2_value(params: ModelParams) -> float:
    w = params.omega
    return params.mu * w**2 * math.cosh(w) / (params.f0 * (math.cosh(w) - 1.0))


def compute_critical(params: ModelParams) -> CriticalValues:
    r_star = solve_r_star(params)
    return CriticalValues(
        lambda1=params.mu * g_eval(params, r_star),
        lambda2=lambda2_value(params),
        r_star=r_star,
    )


def _is_close(a, b, rtol=FOLD_RTOL):
    return abs(a - b) <= rtol * abs(b)


def _tc_root(params: ModelParams, a: float, b: float) -> float:
    """Root of ``mu omega**2 cosh(omega) - lambda den(r)`` on ``[a, b]``, Newton-polished."""
    c = params.mu * params.omega**2 * math.cosh(params.omega)

    def F(r):
        return c - params.lam * float(_denominator(params, r))

    fa, fb = F(a), F(b)
    if fa * fb > 0:
        raise BracketError(f"no sign change of the transmission residual on [{a}, {b}]")
    r = brentq(F, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=400)
    for _ in range(3):
        dF = -params.lam * float(_denominator_prime(params, r))
        if dF == 0:
            break
        r_new = r - F(r) / dF
        if not a <= r_new <= b or abs(F(r_new)) >= abs(F(r)):
            break
        r = r_new
    return r


def solve_free_boundaries(params: ModelParams, critical: CriticalValues | None = None):
    """All free boundaries of monotone solutions at ``params.lam``.

    Returns a list of ``(BranchTag, x_fb)``. At ``lambda = lambda2`` the lower
    root sits at ``x = 0``; that boundary case is excluded from the list.
    """
    crit = critical or compute_critical(params)
    lam, r_star = params.lam, crit.r_star
    if _is_close(lam, crit.lambda1):
        return [(BranchTag.FOLD, r_star)]
    if lam < crit.lambda1:
        return []
    roots = []
    if lam < crit.lambda2 and not _is_close(lam, crit.lambda2):
        roots.append((BranchTag.LOWER, _tc_root(params, 0.0, r_star - FOLD_GAP)))
    hi = None
    for k in range(1, 17):
        cand = 1.0 - 10.0**-k
        if cand > r_star + FOLD_GAP and params.lam * float(_denominator(params, cand)) < (
                params.mu * params.omega**2 * math.cosh(params.omega)):
            hi = cand
            break
    if hi is None:
        raise BracketError(f"upper free boundary not bracketed for lambda={lam}")
    roots.append((BranchTag.UPPER, _tc_root(params, r_star + FOLD_GAP, hi)))
    return roots


# --- profiles ---------------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseProfile:
    """``u = a cosh(wx) + c_left`` on ``[0, x_fb)`` and ``A cosh(wx) + B sinh(wx) + c_right`` after.

    With ``x_fb = None`` the right piece covers the whole interval.
    """

    omega: float
    x_fb: float | None
    a: float
    c_left: float
    A: float
    B: float
    c_right: float

    def _left(self, x):
        return x < self.x_fb if self.x_fb is not None else np.zeros_like(x, dtype=bool)

    def u(self, x):
        x = np.asarray(x, dtype=float)
        wx = self.omega * x
        right = self.A * np.cosh(wx) + self.B * np.sinh(wx) + self.c_right
        if self.x_fb is None:
            out = right
        else:
            out = np.where(self._left(x), self.a * np.cosh(wx) + self.c_left, right)
        return float(out) if out.ndim == 0 else out

    def du(self, x, side=None):
        """Derivative; ``side='left'`` or ``'right'`` picks a one-sided limit."""
        x = np.asarray(x, dtype=float)
        w, wx = self.omega, self.omega * x
        left = w * self.a * np.sinh(wx)
        right = w * (self.A * np.sinh(wx) + self.B * np.cosh(wx))
        if side == "left":
            out = left
        elif side == "right" or self.x_fb is None:
            out = right
        else:
            out = np.where(self._left(x), left, right)
        return float(out) if out.ndim == 0 else out

    def piece(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(self._left(x), "left", "right")

    __call__ = u


def _right_coefficients(omega, lam_f0, x_fb, u_fb, u_one):
    """Solve the 2x2 system for ``A cosh + B sinh + lam_f0/omega**2`` on ``(x_fb, 1)``."""
    c = lam_f0 / omega**2
    M = np.array([[math.cosh(omega * x_fb), math.sinh(omega * x_fb)],
                  [math.cosh(omega), math.sinh(omega)]])
    A, B = np.linalg.solve(M, np.array([u_fb - c, u_one - c]))
    return float(A), float(B), c


def _free_boundary_profile(omega, mu, lam_left, lam_right_f0, x_fb, u_one=0.0):
    w2 = omega**2
    a = (mu * w2 - lam_left) / (w2 * math.cosh(omega * x_fb))
    A, B, c = _right_coefficients(omega, lam_right_f0, x_fb, mu, u_one)
    return PiecewiseProfile(omega, x_fb, a, lam_left / w2, A, B, c)


def right_piece_closed_form(params: ModelParams, x_fb: float, x):
    """Right piece written out as the explicit cosh/sinh expression.

    Independent of the 2x2 solve used by :func:`build_free_boundary_solution`;
    kept only as a cross-check.
    """
    w, lam, f0, mu = params.omega, params.lam, params.f0, params.mu
    x = np.asarray(x, dtype=float)
    q = lam * f0 / w**2
    K = (mu * math.cosh(w) - q * math.cosh(w) + q * math.cosh(w * x_fb)) / math.sinh(w * x_fb - w)
    return ((-lam * f0 / (w**2 * math.cosh(w)) - K * math.sinh(w) / math.cosh(w)) * np.cosh(w * x)
            + K * np.sinh(w * x) + q)


@dataclass(frozen=True)
class StationarySolution:
    params: ModelParams
    branch: BranchTag
    x_fb: float | None
    profile: PiecewiseProfile

    def u(self, x):
        return self.profile.u(x)

    def du(self, x, side=None):
        return self.profile.du(x, side)

    __call__ = u

    @property
    def sup_norm(self) -> float:
        return sup_norm(self)

    def derivative_jump(self) -> float:
        if self.x_fb is None:
            return 0.0
        return abs(self.du(self.x_fb, "left") - self.du(self.x_fb, "right"))

    def header(self) -> dict:
        return {
            "branch": str(self.branch),
            "x_fb": self.x_fb,
            "sup_norm": self.sup_norm,
            "params": self.params.to_dict(),
        }


def build_ice_covered(params: ModelParams) -> StationarySolution:
    """``u* = lambda f0 (1 - cosh(wx)/cosh(w)) / w**2``, valid while it stays below ``mu``."""
    if params.lam >= lambda2_value(params):
        raise NoBranch(f"no ice-covered solution for lambda={params.lam} >= lambda2")
    w = params.omega
    c = params.lam * params.f0 / w**2
    prof = PiecewiseProfile(w, None, 0.0, 0.0, -c / math.cosh(w), 0.0, c)
    return StationarySolution(params, BranchTag.ICE_COVERED, None, prof)


def build_free_boundary_solution(params: ModelParams, x_fb: float,
                                 branch: BranchTag | None = None,
                                 critical: CriticalValues | None = None) -> StationarySolution:
    """Monotone solution whose free boundary is ``x_fb``.

    Raises
    ------
    TransmissionError
        If the derivative jump at ``x_fb`` is not negligible, i.e. ``x_fb``
        does not solve ``g(x_fb) = lambda / mu``.
    """
    if not 0.0 < x_fb < 1.0:
        raise DomainError(f"free boundary must lie in (0, 1), got {x_fb}")
    prof = _free_boundary_profile(params.omega, params.mu, params.lam,
                                  params.lam * params.f0, x_fb)
    dl, dr = prof.du(x_fb, "left"), prof.du(x_fb, "right")
    if abs(dl - dr) > TRANSMISSION_RTOL * (1.0 + abs(dl)):
        raise TransmissionError(
            f"derivative jump {abs(dl - dr):.3e} at x_fb={x_fb}: not a transmission root")
    if branch is None:
        crit = critical or compute_critical(params)
        if _is_close(params.lam, crit.lambda1):
            branch = BranchTag.FOLD
        else:
            branch = BranchTag.LOWER if x_fb < crit.r_star else BranchTag.UPPER
    return StationarySolution(params, branch, x_fb, prof)


def branch_sup_norm(params: ModelParams, x_fb: float) -> float:
    """``u(0) = (mu w**2 - lambda) / (w**2 cosh(w x_fb)) + lambda / w**2``."""
    w2 = params.omega**2
    return (params.mu * w2 - params.lam) / (w2 * math.cosh(params.omega * x_fb)) + params.lam / w2


def sup_norm(sol: StationarySolution) -> float:
    # Monotone and nonnegative, so the maximum sits at x = 0.
    return float(sol.u(0.0))


def enumerate_equilibria(params: ModelParams, critical: CriticalValues | None = None):
    """Every monotone stationary solution at ``params.lam``, ice-covered first."""
    crit = critical or compute_critical(params)
    sols = []
    if params.lam < crit.lambda2 and not _is_close(params.lam, crit.lambda2):
        sols.append(build_ice_covered(params))
    for tag, x in solve_free_boundaries(params, crit):
        sols.append(build_free_boundary_solution(params, x, tag))
    return sols


# --- barriers ---------------------------------------------------------------

@dataclass(frozen=True)
class BarrierPair:
    """Upper/lower barriers around the upper equilibrium and their sup-distance.

    ``epsilon`` is the measured ``max(psi_upper - u_bar, u_bar - psi_lower)``.
    """

    theta: float
    delta: float
    upper: PiecewiseProfile
    lower: PiecewiseProfile
    epsilon: float
    equilibrium: StationarySolution


def _upper_root(params: ModelParams) -> float:
    crit = compute_critical(params)
    if params.lam <= crit.lambda1:
        raise NoBranch(f"no upper branch at lambda={params.lam} <= lambda1={crit.lambda1}")
    for tag, x in solve_free_boundaries(params, crit):
        if tag is BranchTag.UPPER:
            return x
    raise NoBranch(f"no upper branch at lambda={params.lam}")


def build_barriers(params: ModelParams, theta: float, delta: float,
                   grid_points: int = 20001) -> BarrierPair:
    if theta <= 0 or delta <= 0:
        raise ValueError("theta and delta must be positive")
    lam = params.lam
    eq = build_free_boundary_solution(params, _upper_root(params), BranchTag.UPPER)
    x_plus = _upper_root(params.with_lambda(lam + theta))
    x_minus = _upper_root(params.with_lambda(lam - theta))
    f0, w, mu = params.f0, params.omega, params.mu
    upper = _free_boundary_profile(w, mu, lam + theta, (lam + theta) * f0, x_plus, delta)
    lower = _free_boundary_profile(w, mu, lam - theta, (lam - theta) * f0, x_minus, -delta)
    x = np.union1d(np.linspace(0.0, 1.0, grid_points), [x_plus, x_minus, eq.x_fb])
    ub = eq.u(x)
    eps = float(max(np.max(upper.u(x) - ub), np.max(ub - lower.u(x))))
    return BarrierPair(theta, delta, upper, lower, eps, eq)


def h_function(omega: float, x, eps):
    wx = omega * np.asarray(x, dtype=float)
    c = np.cosh(wx)
    return (math.cosh(omega) - np.sinh(wx) * np.sinh(omega - wx)
            + eps * c - eps * c * np.cosh(omega - wx))


def verify_h_positive(params: ModelParams, grid_n: int = 1000) -> bool:
    """Positivity of ``h_{eps,omega}`` on an interior ``grid_n x grid_n`` tensor grid."""
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    s = np.linspace(0.0, 1.0, grid_n + 2)[1:-1]
    X, E = np.meshgrid(s, s, indexing="ij")
    return bool(np.all(h_function(params.omega, X, E) > 0))


def profile_table(sol: StationarySolution, points: int = 201, mirror: bool = False) -> dict:
    """Columns ``x, u, uprime, piece`` for CSV export.

    With ``mirror`` the profile is extended evenly to ``[-1, 0)``.
    """
    x = np.linspace(0.0, 1.0, points)
    u, du = sol.u(x), sol.du(x)
    piece = sol.profile.piece(x)
    if sol.x_fb is None:
        piece = np.full(x.shape, "ice", dtype=object)
    if mirror:
        xm = -x[:0:-1]
        x = np.concatenate([xm, x])
        u = np.concatenate([u[:0:-1], u])
        du = np.concatenate([-du[:0:-1], du])
        piece = np.concatenate([piece[:0:-1], piece])
    return {"x": x, "u": u, "uprime": du, "piece": list(piece)}
