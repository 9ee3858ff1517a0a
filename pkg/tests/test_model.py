import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from budyko.errors import InvalidParams
from budyko.model import (ModelParams, RegularizedAlbedo, beta_graph, beta_regularized,
                          beta_regularized_derivative, beta_regularized_primitive, coalbedo)

f0s = st.floats(0.01, 0.99)
mus = st.floats(0.1, 5.0)
vals = st.floats(-10.0, 10.0, allow_nan=False)
epss = st.floats(1e-6, 1.0)


def test_coalbedo_examples():
    assert coalbedo(ModelParams(1, 1, 0.5), 0.3) == 0.5
    assert coalbedo(ModelParams(1, 1, 0.5), 1.0) == 1.0
    assert coalbedo(ModelParams(1, 2, 0.25), 3.0) == 1.0


def test_coalbedo_vectorized():
    out = coalbedo(ModelParams(1, 1, 0.5), np.array([0.0, 1.0, 2.0]))
    assert out.tolist() == [0.5, 1.0, 1.0]


def test_beta_graph_examples():
    p = ModelParams(1, 1, 0.5)
    assert beta_graph(p, 1.0) == (0.5, 1.0)
    assert beta_graph(p, 0.0) == (0.5, 0.5)
    assert beta_graph(p, 2.0) == (1.0, 1.0)


@pytest.mark.parametrize("bad", [
    dict(omega=0.0, mu=1, f0=0.5), dict(omega=1, mu=-1, f0=0.5), dict(omega=1, mu=1, f0=0.0),
    dict(omega=1, mu=1, f0=1.0), dict(omega=1, mu=1, f0=1.5), dict(omega=1, mu=1, f0=0.5, lam=0),
    dict(omega=float("nan"), mu=1, f0=0.5), dict(omega="1", mu=1, f0=0.5),
])
def test_params_rejected(bad):
    with pytest.raises(InvalidParams):
        ModelParams(**bad)


def test_params_json_roundtrip():
    p = ModelParams(0.7, 1.3, 0.25, 4.5)
    d = json.loads(p.to_json())
    assert set(d) == {"omega", "mu", "f0", "lambda"}
    assert ModelParams.from_json(p.to_json()) == p
    with pytest.raises(InvalidParams):
        ModelParams.from_dict({"omega": 1, "mu": 1, "f0": 0.5})


def test_epsilon_must_be_positive():
    with pytest.raises(InvalidParams):
        RegularizedAlbedo(ModelParams(1, 1, 0.5), 0.0)
    with pytest.raises(InvalidParams):
        RegularizedAlbedo(ModelParams(1, 1, 0.5), -1e-3)


def test_ramp_endpoints_and_midpoint():
    p = ModelParams(1, 1, 0.3)
    reg = RegularizedAlbedo(p, 0.1)
    assert beta_regularized(reg, 0.9) == pytest.approx(0.3, abs=1e-15)
    assert beta_regularized(reg, 1.1) == pytest.approx(1.0, abs=1e-15)
    assert beta_regularized(reg, 1.0) == pytest.approx(0.65, abs=1e-15)


@given(f0s, mus, epss, vals, vals)
def test_ramp_bounded_and_monotone(f0, mu, eps, a, b):
    reg = RegularizedAlbedo(ModelParams(1, mu, f0), eps)
    lo, hi = min(a, b), max(a, b)
    ba, bb = beta_regularized(reg, lo), beta_regularized(reg, hi)
    assert f0 - 1e-15 <= ba <= bb <= 1.0 + 1e-15


@given(f0s, mus, epss, vals)
def test_ramp_equals_step_off_the_ramp(f0, mu, eps, v):
    p = ModelParams(1, mu, f0)
    reg = RegularizedAlbedo(p, eps)
    if abs(v - mu) > eps:
        assert beta_regularized(reg, v) == coalbedo(p, v)


@given(f0s, mus, vals)
def test_coalbedo_in_graph(f0, mu, v):
    p = ModelParams(1, mu, f0)
    c = coalbedo(p, v)
    lo, hi = beta_graph(p, v)
    assert c in (f0, 1.0)
    assert lo <= c <= hi


def test_ramp_converges_to_step():
    p = ModelParams(1, 1, 0.5)
    v = np.array([0.9, 0.999, 1.001, 1.2])
    for eps in (1e-2, 1e-4, 1e-6):
        reg = RegularizedAlbedo(p, eps)
        far = np.abs(v - 1) > eps
        assert np.all(beta_regularized(reg, v)[far] == coalbedo(p, v)[far])


def test_derivative_and_primitive_against_differences():
    p = ModelParams(1, 1, 0.4)
    reg = RegularizedAlbedo(p, 0.05)
    v = np.linspace(0.8, 1.2, 4001)
    h = 1e-6
    fd = (beta_regularized(reg, v + h) - beta_regularized(reg, v - h)) / (2 * h)
    # The second derivative jumps at the ramp ends, which costs O(h) there.
    assert np.max(np.abs(fd - beta_regularized_derivative(reg, v))) < 2e-4
    fdp = (beta_regularized_primitive(reg, v + h) - beta_regularized_primitive(reg, v - h)) / (2 * h)
    assert np.max(np.abs(fdp - beta_regularized(reg, v))) < 1e-8
    assert beta_regularized_primitive(reg, 0.0) == 0.0
    # Outside the ramp the primitive is that of the step.
    assert beta_regularized_primitive(reg, 2.0) == pytest.approx(0.4 * 2.0 + 0.6 * 1.0, rel=1e-15)
    assert math.isclose(beta_regularized_primitive(reg, 0.5), 0.2)
