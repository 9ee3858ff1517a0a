import json

import pytest

from budyko.errors import DomainError, NoBranch
from budyko.experiments import (Check, ExperimentConfig, ExperimentReport, lambda_at_fraction,
                                run_eigen_consistency, run_instability, run_stability, to_jsonable)
from budyko.model import ModelParams
from budyko.stationary import compute_critical

LIGHT = dict(n=400, snapshot_every=100)


@pytest.fixture(scope="module")
def stability():
    return run_stability(ExperimentConfig.at_fraction(frac=0.5, t_final=10, **LIGHT))


@pytest.fixture(scope="module")
def instability():
    return run_instability(ExperimentConfig.at_fraction(frac=0.5, t_final=20, **LIGHT))


@pytest.fixture(scope="module")
def eigen():
    return run_eigen_consistency(ExperimentConfig.at_fraction(omega=0.5, frac=0.5, n=400, snapshot_every=50))


def test_lambda_at_fraction():
    p = ModelParams(1, 1, 0.5)
    c = compute_critical(p)
    assert lambda_at_fraction(p, 0.0) == c.lambda1
    assert lambda_at_fraction(p, 1.0) == pytest.approx(c.lambda2, rel=1e-15)


def test_verdict_rules():
    cfg = {"n": 1}
    ok = ExperimentReport("x", cfg, {"a": Check(True), "b": Check(False, gated=False)}, {})
    assert ok.verdict == "pass"
    bad = ExperimentReport("x", cfg, {"a": Check(False)}, {})
    assert bad.verdict == "fail" and not bad.passed
    free = ExperimentReport("x", cfg, {"a": Check(False)}, {}, gated=False)
    assert free.verdict == "ungated"


def test_jsonable_replaces_nan():
    assert to_jsonable({"a": float("nan"), "b": (1, 2.5)}) == {"a": None, "b": [1, 2.5]}


def test_config_roundtrip():
    cfg = ExperimentConfig.at_fraction(frac=0.3, theta=0.01, seed=4, tolerances={"distance": 1e-4})
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_stability_battery_passes(stability):
    assert stability.verdict == "pass"
    names = {k.rsplit("_", 3)[0] for k in stability.checks if k.endswith("_stays_in_E")}
    assert len(names) == 8
    eps = stability.measured["epsilon"]
    assert eps > 0
    for k, c in stability.checks.items():
        if k.endswith("distance_below_3eps"):
            assert c.value < 3 * eps


def test_instability_runs_and_tracks(instability):
    c = instability.checks
    for name in ("A_monotone_up", "A_fb_nondecreasing", "A_below_upper", "B_monotone_down",
                 "B_fb_decreasing", "B_fb_vanishes", "witness_start_within_2eps",
                 "witness_end_separation", "theta_continuity"):
        assert c[name].passed, name


def test_instability_verdict_pass(instability):
    # Requires the sub-threshold start to lie above the lower branch everywhere.
    assert instability.verdict == "pass", {k: v.value for k, v in instability.checks.items() if not v.passed}


def test_instability_at_lambda2_is_ungated():
    rep = run_instability(ExperimentConfig.at_fraction(frac=1.0, t_final=20, **LIGHT), theta_check=False)
    assert rep.verdict == "ungated"
    assert rep.checks["A_monotone_up"].passed
    assert "B_monotone_down" not in rep.checks


def test_instability_window_errors():
    with pytest.raises(NoBranch):
        run_instability(ExperimentConfig.at_fraction(frac=0.5, theta=10.0, **LIGHT))
    with pytest.raises(NoBranch):
        run_instability(ExperimentConfig.at_fraction(frac=1.5, **LIGHT))
    with pytest.raises(NoBranch):
        run_stability(ExperimentConfig.at_fraction(frac=-0.5, **LIGHT))


def test_eigen_sign_and_dominance(eigen):
    c = eigen.checks
    assert c["eta1_negative"].passed and c["methods_agree"].passed
    assert c["growth_positive"].passed
    assert c["eigen_shape_grows_fastest"].passed
    assert c["upper_perturbation_decays"].passed


def test_eigen_growth_rate_within_band(eigen):
    assert eigen.checks["growth_rate_matches_eta1"].passed, eigen.checks["growth_rate_matches_eta1"].value


def test_eigen_route_needs_small_omega():
    with pytest.raises(DomainError):
        run_eigen_consistency(ExperimentConfig.at_fraction(omega=1.0, frac=0.5, **LIGHT))


def test_reports_reproducible(instability):
    again = run_instability(ExperimentConfig.at_fraction(frac=0.5, t_final=20, **LIGHT))
    assert again.to_json() == instability.to_json()
    d = json.loads(again.to_json())
    assert d["config"]["theta"] == pytest.approx(0.02 * (compute_critical(ModelParams(1, 1, 0.5)).lambda2
                                                         - compute_critical(ModelParams(1, 1, 0.5)).lambda1))
    assert d["config"]["seed"] == 0


def test_stability_seed_changes_battery():
    a = run_stability(ExperimentConfig.at_fraction(frac=0.5, t_final=1, seed=1, **LIGHT))
    b = run_stability(ExperimentConfig.at_fraction(frac=0.5, t_final=1, seed=2, **LIGHT))
    assert a.checks["random_0_distance_below_3eps"].value != b.checks["random_0_distance_below_3eps"].value
