"""Compiled inner loop of the time stepper.

One call advances a batch of fields by ``nsteps`` semi-implicit steps and
fills per-step diagnostic rows. Thomas elimination reuses the forward
sweep coefficients computed once per ``(n, omega, dt)``.
"""

import numpy as np
from numba import njit

MAX_CROSSINGS = 4

# Column layout of the per-step diagnostics block.
SUP, L2, H1, MIN_INC, MAX_INC, MAX_ABS_INC, ENERGY, FB_SLOPE, LO_MARGIN, HI_MARGIN = range(10)
N_DIAG = 10


def thomas_coefficients(n, omega, dt):
    h2 = (1.0 / n) ** 2
    diag = np.full(n, 1.0 + dt * (2.0 / h2 + omega**2))
    upper = np.full(n, -dt / h2)
    upper[0] = -2.0 * dt / h2
    lower = -dt / h2
    cprime = np.zeros(n)
    inv = np.zeros(n)
    inv[0] = 1.0 / diag[0]
    cprime[0] = upper[0] * inv[0]
    for i in range(1, n):
        inv[i] = 1.0 / (diag[i] - lower * cprime[i - 1])
        cprime[i] = upper[i] * inv[i]
    return cprime, inv, lower


@njit(cache=True)
def _beta(v, f0, mu, eps):
    t = (v - mu + eps) / (2.0 * eps)
    if t <= 0.0:
        return f0
    if t >= 1.0:
        return 1.0
    return f0 + (1.0 - f0) * t * t * (3.0 - 2.0 * t)


@njit(cache=True)
def _primitive(v, f0, mu, eps):
    if v <= mu - eps:
        return f0 * v
    if v >= mu + eps:
        return f0 * v + (1.0 - f0) * (v - mu)
    t = (v - mu + eps) / (2.0 * eps)
    return f0 * v + (1.0 - f0) * 2.0 * eps * (t**3 - 0.5 * t**4)


@njit(cache=True)
def fill_diagnostics(u, prev, x, omega, lam, f0, mu, eps, lo, hi, has_bounds, out, cross):
    n = u.shape[0] - 1
    h = 1.0 / n
    sup = 0.0
    l2 = 0.0
    h1 = 0.0
    energy = 0.0
    for j in range(n + 1):
        a = abs(u[j])
        if a > sup:
            sup = a
        w = 0.5 if (j == 0 or j == n) else 1.0
        l2 += w * u[j] * u[j]
        if j < n:
            d = u[j + 1] - u[j]
            h1 += d * d
            we = 0.5 if j == 0 else 1.0
            energy += we * h * (0.5 * omega * omega * u[j] * u[j] - lam * _primitive(u[j], f0, mu, eps))
    energy += 0.5 * h1 / h
    out[SUP] = sup
    out[L2] = np.sqrt(h * l2)
    out[H1] = np.sqrt(h1 / h)
    out[ENERGY] = energy
    if prev.shape[0] == u.shape[0]:
        mn = np.inf
        mx = -np.inf
        for j in range(n + 1):
            d = u[j] - prev[j]
            if d < mn:
                mn = d
            if d > mx:
                mx = d
        out[MIN_INC] = mn
        out[MAX_INC] = mx
        out[MAX_ABS_INC] = max(abs(mn), abs(mx))
    else:
        out[MIN_INC] = np.nan
        out[MAX_INC] = np.nan
        out[MAX_ABS_INC] = np.nan
    count = 0
    out[FB_SLOPE] = np.nan
    for k in range(cross.shape[0]):
        cross[k] = np.nan
    for j in range(n):
        a0 = u[j] >= mu
        a1 = u[j + 1] >= mu
        if a0 != a1:
            if count == 0:
                out[FB_SLOPE] = abs(u[j + 1] - u[j]) / h
            if count < cross.shape[0]:
                u0 = u[j] - mu
                u1 = u[j + 1] - mu
                cross[count] = x[j] + h * u0 / (u0 - u1)
            count += 1
    if has_bounds:
        lm = np.inf
        hm = np.inf
        for j in range(n + 1):
            if u[j] - lo[j] < lm:
                lm = u[j] - lo[j]
            if hi[j] - u[j] < hm:
                hm = hi[j] - u[j]
        out[LO_MARGIN] = lm
        out[HI_MARGIN] = hm
    else:
        out[LO_MARGIN] = np.nan
        out[HI_MARGIN] = np.nan
    return count


@njit(cache=True)
def advance_chunk(U, nsteps, dt, omega, lam, f0, mu, eps, cprime, inv, lower, x,
                  lo, hi, has_bounds, diag, counts, cross):
    """Advance each row of ``U`` in place by ``nsteps`` steps.

    ``diag[k, i]``, ``counts[k, i]`` and ``cross[k, i]`` receive the
    diagnostics after step ``k + 1`` of field ``i``.
    Returns the number of steps completed before a non-finite value appeared.
    """
    m, np1 = U.shape
    n = np1 - 1
    rhs = np.empty(n)
    prev = np.empty(np1)
    for k in range(nsteps):
        for i in range(m):
            u = U[i]
            for j in range(np1):
                prev[j] = u[j]
            for j in range(n):
                rhs[j] = u[j] + dt * lam * _beta(u[j], f0, mu, eps)
            rhs[0] = rhs[0] * inv[0]
            for j in range(1, n):
                rhs[j] = (rhs[j] - lower * rhs[j - 1]) * inv[j]
            for j in range(n - 2, -1, -1):
                rhs[j] = rhs[j] - cprime[j] * rhs[j + 1]
            finite = True
            for j in range(n):
                u[j] = rhs[j]
                if not np.isfinite(rhs[j]):
                    finite = False
            u[n] = 0.0
            if not finite:
                return k
            counts[k, i] = fill_diagnostics(u, prev, x, omega, lam, f0, mu, eps, lo, hi,
                                            has_bounds, diag[k, i], cross[k, i])
    return nsteps
