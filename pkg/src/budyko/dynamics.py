"""Semi-implicit time stepping of the regularized parabolic problem.

Solves ``u_t - u_xx + omega**2 u = lambda beta_eps(u)`` on the uniform grid
``x_j = j/n`` with a Neumann ghost node at ``x = 0`` and ``u(1) = 0``.
Diffusion and absorption are implicit, the co-albedo term explicit:

    (I + dt (A + omega**2)) u_new = u_old + dt lambda beta_eps(u_old)

The matrix is an M-matrix and ``beta_eps`` is nondecreasing, so the update
is order preserving. ``beta_eps`` has a convex primitive, so treating it
explicitly is a convex splitting and the discrete energy decays for any dt.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import lapack, solve_banded

from . import _kernels as K
from .errors import ConvergenceError, GridError, InvalidParams, NumericalBlowup
from .model import (ModelParams, RegularizedAlbedo, beta_regularized,
                    beta_regularized_derivative, beta_regularized_primitive)

__all__ = [
    "Grid",
    "Field",
    "Trajectory",
    "NondegeneracyReport",
    "default_epsilon",
    "step",
    "integrate",
    "integrate_batch",
    "check_monotone_in_time",
    "monotonicity_violation",
    "check_nondegeneracy",
    "distance_metrics",
    "discrete_energy",
    "discrete_equilibrium",
    "crossings",
]

CONVERGED_INCREMENT = 1e-9
CONVERGED_STEPS = 100


@dataclass(frozen=True)
class Grid:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 16:
            raise InvalidParams(f"grid needs an integer n >= 16 cells, got {self.n}")

    @property
    def dx(self) -> float:
        return 1.0 / self.n

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights in units of dx; the Neumann node counts half."""
        w = np.ones(self.n + 1)
        w[0] = w[-1] = 0.5
        return w


@dataclass
class Field:
    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n + 1,):
            raise GridError(f"expected {self.grid.n + 1} nodal values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NumericalBlowup("field has non-finite values")
        v[-1] = 0.0
        self.values = v

    @classmethod
    def from_function(cls, grid: Grid, fn, time: float = 0.0) -> "Field":
        return cls(grid, np.asarray(fn(grid.x), dtype=float), time)


def default_epsilon(grid: Grid, params: ModelParams, slope: float | None = None) -> float:
    """Ramp half-width resolving the jump over several cells."""
    if slope is not None:
        return max(4.0 * grid.dx * abs(slope), 1e-8)
    return 4.0 * grid.dx * params.mu


@functools.lru_cache(maxsize=32)
def _factor(n: int, omega: float, dt: float):
    # Row 0 is scaled by 1/2 so the system matrix is symmetric positive definite.
    h2 = (1.0 / n) ** 2
    d = np.full(n, 1.0 + dt * (2.0 / h2 + omega**2))
    d[0] = 0.5 * (1.0 + dt * omega**2) + dt / h2
    e = np.full(n - 1, -dt / h2)
    df, ef, info = lapack.dpttrf(d, e)
    if info != 0:
        raise ConvergenceError(f"tridiagonal factorization failed (info={info})")
    return df, ef


def _advance(U, params: ModelParams, reg: RegularizedAlbedo, dt: float):
    """One step for a batch ``U`` of shape ``(m, n + 1)``."""
    n = U.shape[1] - 1
    df, ef = _factor(n, params.omega, dt)
    rhs = U[:, :n] + dt * params.lam * beta_regularized(reg, U[:, :n])
    rhs[:, 0] *= 0.5
    sol, info = lapack.dpttrs(df, ef, np.asfortranarray(rhs.T))
    if info != 0:
        raise ConvergenceError(f"tridiagonal solve failed (info={info})")
    out = np.zeros_like(U)
    out[:, :n] = sol.T
    return out


def step(field: Field, params: ModelParams, reg: RegularizedAlbedo, dt: float) -> Field:
    if dt <= 0:
        raise InvalidParams("dt must be positive")
    new = _advance(field.values[None, :], params, reg, dt)[0]
    if not np.all(np.isfinite(new)):
        raise NumericalBlowup(f"non-finite values after step at t={field.time}")
    return Field(field.grid, new, field.time + dt)


def crossings(x: np.ndarray, u: np.ndarray, mu: float) -> list[float]:
    """Linearly interpolated sign changes of ``u - mu`` (``u >= mu`` counts as ice-free)."""
    above = u >= mu
    idx = np.flatnonzero(above[:-1] != above[1:])
    out = []
    for j in idx:
        u0, u1 = u[j] - mu, u[j + 1] - mu
        out.append(float(x[j] + (x[j + 1] - x[j]) * u0 / (u0 - u1)))
    return out


def discrete_energy(U, params: ModelParams, reg: RegularizedAlbedo):
    """``sum(0.5 (Du)**2 + 0.5 omega**2 u**2 - lambda B_eps(u)) dx`` with trapezoid weights.

    The weighting makes the stepper's operator the exact gradient of this
    functional. Works on a single field or a batch along the last axis.
    """
    U = np.atleast_2d(U)
    n = U.shape[1] - 1
    h = 1.0 / n
    w = np.ones(n + 1)
    w[0] = 0.5
    w[-1] = 0.0
    grad = 0.5 * np.sum(np.diff(U, axis=1) ** 2, axis=1) / h
    pot = h * np.sum(w * (0.5 * params.omega**2 * U**2
                          - params.lam * beta_regularized_primitive(reg, U)), axis=1)
    return grad + pot


@dataclass
class Trajectory:
    """Snapshots plus per-step diagnostics of one run.

    ``diagnostics`` maps a name to an array with one entry per step index
    (index 0 is the initial datum): ``time``, ``sup``, ``l2``, ``h1``,
    ``min_increment``, ``max_increment``, ``max_abs_increment``, ``energy``,
    ``fb_slope`` (discrete slope at the first crossing of ``mu``, the
    non-degeneracy margin) and, when bounds were given, ``lower_margin`` and
    ``upper_margin``.
    """

    grid: Grid
    params: ModelParams
    reg: RegularizedAlbedo
    dt: float
    snapshots: list = dc_field(default_factory=list)
    diagnostics: dict = dc_field(default_factory=dict)
    fb_count: np.ndarray | None = None
    fb_crossings: np.ndarray | None = None
    converged_time: float | None = None

    @property
    def final(self) -> Field:
        return self.snapshots[-1]

    @property
    def fb_x(self) -> np.ndarray:
        """First crossing per step, NaN when there is none."""
        return self.fb_crossings[:, 0]

    @property
    def fb_track(self) -> list:
        """``(time, x_fb)`` per step; ``x_fb`` is None without exactly one crossing."""
        t = self.diagnostics["time"]
        return [(float(ti), None if c != 1 else float(xf))
                for ti, xf, c in zip(t, self.fb_x, self.fb_count)]


_DIAG_NAMES = {
    K.SUP: "sup", K.L2: "l2", K.H1: "h1", K.MIN_INC: "min_increment",
    K.MAX_INC: "max_increment", K.MAX_ABS_INC: "max_abs_increment", K.ENERGY: "energy",
    K.FB_SLOPE: "fb_slope", K.LO_MARGIN: "lower_margin", K.HI_MARGIN: "upper_margin",
}


@functools.lru_cache(maxsize=32)
def _thomas(n, omega, dt):
    return K.thomas_coefficients(n, omega, dt)


def integrate_batch(u0s, params: ModelParams, reg: RegularizedAlbedo, dt: float | None = None,
                    t_final: float = 1.0, snapshot_every: int = 100, bounds=None,
                    stop_when_converged: bool = False) -> list[Trajectory]:
    """Integrate several initial fields on one grid in lockstep.

    ``bounds = (lower, upper)`` (nodal arrays) adds per-step margins
    ``min(u - lower)`` and ``min(upper - u)`` to the diagnostics.
    """
    if t_final <= 0:
        raise InvalidParams("t_final must be positive")
    grid = u0s[0].grid
    if any(f.grid != grid for f in u0s):
        raise GridError("all initial fields must share one grid")
    dt = grid.dx if dt is None else float(dt)
    if dt <= 0:
        raise InvalidParams("dt must be positive")
    if snapshot_every < 1:
        raise InvalidParams("snapshot_every must be >= 1")
    nsteps = int(round(t_final / dt))
    m, n, x = len(u0s), grid.n, grid.x
    t0 = u0s[0].time
    p = params
    cprime, inv, lower = _thomas(n, p.omega, dt)
    if bounds is None:
        lo = hi = np.zeros(n + 1)
        has_bounds = False
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in bounds)
        has_bounds = True

    diag = np.full((nsteps + 1, m, K.N_DIAG), np.nan)
    counts = np.zeros((nsteps + 1, m), dtype=np.int64)
    cross = np.full((nsteps + 1, m, K.MAX_CROSSINGS), np.nan)
    U = np.array([f.values for f in u0s])
    for i in range(m):
        counts[0, i] = K.fill_diagnostics(U[i], np.empty(0), x, p.omega, p.lam, p.f0, p.mu,
                                          reg.epsilon, lo, hi, has_bounds, diag[0, i], cross[0, i])
    trajs = [Trajectory(grid, params, reg, dt) for _ in range(m)]
    for i, tr in enumerate(trajs):
        tr.snapshots.append(Field(grid, U[i].copy(), t0))

    done = 0
    calm = np.zeros(m, dtype=int)
    while done < nsteps:
        chunk = min(snapshot_every, nsteps - done)
        sl = slice(done + 1, done + 1 + chunk)
        got = K.advance_chunk(U, chunk, dt, p.omega, p.lam, p.f0, p.mu, reg.epsilon,
                              cprime, inv, lower, x, lo, hi, has_bounds,
                              diag[sl], counts[sl], cross[sl])
        if got < chunk:
            last = done + got
            _finish(trajs, diag, counts, cross, last, t0, dt)
            raise NumericalBlowup(f"non-finite values at t={t0 + (last + 1) * dt}", partial=trajs)
        for k in range(done + 1, done + 1 + chunk):
            calm = np.where(diag[k, :, K.MAX_ABS_INC] < CONVERGED_INCREMENT, calm + 1, 0)
            for i, tr in enumerate(trajs):
                if tr.converged_time is None and calm[i] >= CONVERGED_STEPS:
                    tr.converged_time = t0 + k * dt
        done += chunk
        for i, tr in enumerate(trajs):
            tr.snapshots.append(Field(grid, U[i].copy(), t0 + done * dt))
        if stop_when_converged and all(tr.converged_time is not None for tr in trajs):
            break
    _finish(trajs, diag, counts, cross, done, t0, dt)
    return trajs


def _finish(trajs, diag, counts, cross, last, t0, dt):
    time = t0 + dt * np.arange(last + 1)
    for i, tr in enumerate(trajs):
        tr.diagnostics = {"time": time}
        for col, name in _DIAG_NAMES.items():
            tr.diagnostics[name] = diag[: last + 1, i, col].copy()
        tr.fb_count = counts[: last + 1, i].copy()
        tr.fb_crossings = cross[: last + 1, i].copy()


def integrate(u0: Field, params: ModelParams, reg: RegularizedAlbedo, dt: float | None = None,
              t_final: float = 1.0, snapshot_every: int = 100, bounds=None,
              stop_when_converged: bool = False) -> Trajectory:
    return integrate_batch([u0], params, reg, dt, t_final, snapshot_every, bounds,
                           stop_when_converged)[0]


def check_monotone_in_time(traj: Trajectory, direction: str = "up", tol: float = 0.0) -> bool:
    """Consecutive snapshots ordered up (``u(t') >= u(t) - tol``) or down.

    Per-step increments, when recorded, are checked against the same tolerance.
    """
    if len(traj.snapshots) < 2:
        raise ValueError("need at least two snapshots")
    if direction not in ("up", "down"):
        raise ValueError("direction must be 'up' or 'down'")
    sign = 1.0 if direction == "up" else -1.0
    for a, b in zip(traj.snapshots, traj.snapshots[1:]):
        if np.min(sign * (b.values - a.values)) < -tol:
            return False
    key = "min_increment" if direction == "up" else "max_increment"
    inc = traj.diagnostics.get(key)
    if inc is not None and len(inc) > 1 and np.min(sign * inc[1:]) < -tol:
        return False
    return True


def monotonicity_violation(traj: Trajectory, direction: str = "up") -> float:
    """Largest step-to-step move against ``direction`` across snapshots (0 if none)."""
    sign = 1.0 if direction == "up" else -1.0
    worst = 0.0
    for a, b in zip(traj.snapshots, traj.snapshots[1:]):
        worst = max(worst, float(-np.min(sign * (b.values - a.values))))
    return worst


@dataclass(frozen=True)
class NondegeneracyReport:
    theta_samples: tuple
    measures: tuple
    fitted_C: float
    theta0: float
    exponent: float | None
    degenerate: bool


def check_nondegeneracy(field: Field, theta_list, mu: float) -> NondegeneracyReport:
    """Estimate ``meas{|u - mu| <= theta}`` by counting cells, and fit ``C``.

    The crossing is flagged degenerate when the measure scales like
    ``theta**p`` with ``p < 3/4`` (a transversal crossing gives ``p = 1``).
    """
    thetas = np.sort(np.asarray(theta_list, dtype=float))
    if np.any(thetas <= 0) or np.any(thetas >= mu):
        raise ValueError("theta samples must lie in (0, mu)")
    dev = np.abs(field.values - mu)
    meas = np.array([np.count_nonzero(dev <= th) * field.grid.dx for th in thetas])
    meas = np.minimum(meas, 1.0)
    C = float(np.max(meas / thetas))
    ok = meas > 0
    p = None
    degenerate = False
    if np.count_nonzero(ok) >= 2 and thetas[ok][-1] > thetas[ok][0]:
        p = float(np.polyfit(np.log(thetas[ok]), np.log(meas[ok]), 1)[0])
        degenerate = p < 0.75
    return NondegeneracyReport(tuple(thetas), tuple(meas), C, float(thetas[-1]), p, degenerate)


def distance_metrics(a: Field, b: Field) -> tuple[float, float, float]:
    """Discrete ``(L_inf, L2, H1-seminorm)`` of ``a - b``."""
    if a.grid != b.grid:
        raise GridError(f"grid mismatch: {a.grid.n} vs {b.grid.n}")
    d = a.values - b.values
    h = a.grid.dx
    linf = float(np.max(np.abs(d)))
    l2 = float(np.sqrt(h * np.sum(a.grid.weights * d**2)))
    h1 = float(np.sqrt(np.sum(np.diff(d) ** 2) / h))
    return linf, l2, h1


def discrete_equilibrium(grid: Grid, params: ModelParams, reg: RegularizedAlbedo,
                         guess: Field, tol: float = 1e-13, maxiter: int = 50) -> Field:
    """Newton solve of ``(A + omega**2) u = lambda beta_eps(u)`` on the grid.

    Converges to the discrete equilibrium nearest ``guess``, stable or not.
    """
    n, h2 = grid.n, grid.dx**2
    w2, lam = params.omega**2, params.lam
    u = guess.values[:n].copy()

    def residual(u):
        full = np.append(u, 0.0)
        r = (2.0 * full[:n] - np.append(full[1:n], 0.0) - np.concatenate([[full[1]], full[: n - 1]])) / h2
        return r + w2 * u - lam * beta_regularized(reg, u)

    for _ in range(maxiter):
        r = residual(u)
        if np.max(np.abs(r)) * h2 < tol:
            return Field(grid, np.append(u, 0.0), guess.time)
        ab = np.zeros((3, n))
        ab[1] = 2.0 / h2 + w2 - lam * beta_regularized_derivative(reg, u)
        ab[0, 1:] = -1.0 / h2
        ab[0, 1] = -2.0 / h2
        ab[2, :-1] = -1.0 / h2
        u = u - solve_banded((1, 1), ab, r)
    raise ConvergenceError("discrete equilibrium Newton iteration did not converge")
