"""Parameters, the discontinuous co-albedo and its monotone completions.

The stationary problem is ``-u'' + omega**2 u = lambda f(u)`` on ``(0, 1)``
with ``u'(0) = 0`` and ``u(1) = 0``, where the co-albedo ``f`` jumps from
``f0`` to ``1`` when the temperature reaches the threshold ``mu``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import InvalidParams

__all__ = [
    "ModelParams",
    "RegularizedAlbedo",
    "coalbedo",
    "beta_graph",
    "beta_regularized",
    "beta_regularized_derivative",
    "beta_regularized_primitive",
]


def _check_finite(name, value):
    if not isinstance(value, (int, float, np.floating, np.integer)) or isinstance(value, bool):
        raise InvalidParams(f"{name} must be a real number, got {value!r}")
    if not math.isfinite(value):
        raise InvalidParams(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class ModelParams:
    """The triple ``(omega, mu, f0)`` together with the solar constant.

    ``lam`` is the solar-constant parameter; it serializes under the key
    ``"lambda"``.

    Raises
    ------
    InvalidParams
        If ``omega``, ``mu`` or ``lam`` is not positive, or ``f0`` is not in
        the open interval ``(0, 1)``.
    """

    omega: float
    mu: float
    f0: float
    lam: float = 1.0

    def __post_init__(self):
        for name in ("omega", "mu", "f0", "lam"):
            _check_finite(name, getattr(self, name))
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.omega <= 0:
            raise InvalidParams(f"omega must be > 0, got {self.omega}")
        if self.mu <= 0:
            raise InvalidParams(f"mu must be > 0, got {self.mu}")
        if self.lam <= 0:
            raise InvalidParams(f"lambda must be > 0, got {self.lam}")
        if not 0.0 < self.f0 < 1.0:
            raise InvalidParams(f"f0 must satisfy 0 < f0 < 1, got {self.f0}")

    def with_lambda(self, lam: float) -> "ModelParams":
        return replace(self, lam=lam)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        missing = {"omega", "mu", "f0", "lambda"} - set(d)
        if missing:
            raise InvalidParams(f"missing keys: {sorted(missing)}")
        return cls(omega=d["omega"], mu=d["mu"], f0=d["f0"], lam=d["lambda"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class RegularizedAlbedo:
    """Smoothstep regularization of the co-albedo over ``[mu - eps, mu + eps]``."""

    params: ModelParams
    epsilon: float

    def __post_init__(self):
        _check_finite("epsilon", self.epsilon)
        if self.epsilon <= 0:
            raise InvalidParams(f"epsilon must be > 0, got {self.epsilon}")
        object.__setattr__(self, "epsilon", float(self.epsilon))

    def __call__(self, v):
        return beta_regularized(self, v)


def coalbedo(params: ModelParams, v):
    """Discontinuous co-albedo ``f0 + (1 - f0) H(v - mu)`` with ``H(0) = 1``.

    Accepts scalars or arrays.
    """
    out = np.where(np.asarray(v) >= params.mu, 1.0, params.f0)
    return float(out) if out.ndim == 0 else out


def beta_graph(params: ModelParams, v: float) -> tuple[float, float]:
    """Maximal monotone graph of the co-albedo as a closed interval ``(lo, hi)``."""
    if v == params.mu:
        return (params.f0, 1.0)
    fv = coalbedo(params, v)
    return (fv, fv)


def _ramp_parameter(reg: RegularizedAlbedo, v):
    mu, eps = reg.params.mu, reg.epsilon
    return np.clip((np.asarray(v, dtype=float) - mu + eps) / (2.0 * eps), 0.0, 1.0)


def beta_regularized(reg: RegularizedAlbedo, v):
    """C1 monotone ramp ``f0 + (1 - f0) s(t)`` with ``s(t) = 3t**2 - 2t**3``."""
    t = _ramp_parameter(reg, v)
    f0 = reg.params.f0
    out = f0 + (1.0 - f0) * t * t * (3.0 - 2.0 * t)
    return float(out) if out.ndim == 0 else out


def beta_regularized_derivative(reg: RegularizedAlbedo, v):
    t = _ramp_parameter(reg, v)
    out = (1.0 - reg.params.f0) * 6.0 * t * (1.0 - t) / (2.0 * reg.epsilon)
    return float(out) if out.ndim == 0 else out


def beta_regularized_primitive(reg: RegularizedAlbedo, v):
    """Primitive ``B_eps`` of the regularized co-albedo with ``B_eps(0) = 0``.

    Equal to ``f0 v + (1 - f0) (v - mu)_+`` outside the ramp, so it converges
    to the primitive of the step as ``eps -> 0``.
    """
    v = np.asarray(v, dtype=float)
    mu, eps, f0 = reg.params.mu, reg.epsilon, reg.params.f0
    t = _ramp_parameter(reg, v)
    ramp = 2.0 * eps * (t**3 - 0.5 * t**4)
    ramp = np.where(v >= mu + eps, v - mu, ramp)
    out = f0 * v + (1.0 - f0) * ramp
    return float(out) if out.ndim == 0 else out
