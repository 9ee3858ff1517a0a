import csv
import io
import math
from dataclasses import replace

import numpy as np
import pytest

from budyko.bifurcation import BifurcationCurve, fold_gaps, trace, verify_s_shape
from budyko.errors import ShapeViolation
from budyko.model import ModelParams
from budyko.stationary import (BranchTag, branch_sup_norm, build_ice_covered, compute_critical,
                               enumerate_equilibria)

DEFAULT = ModelParams(1.0, 1.0, 0.5)
CRIT = compute_critical(DEFAULT)


@pytest.fixture(scope="module")
def curve():
    return trace(1.0, 1.0, 0.5, 0.5 * CRIT.lambda1, 1.5 * CRIT.lambda2, 400)


def test_default_sweep_is_s_shaped(curve):
    rep = verify_s_shape(curve)
    assert rep.passed
    assert rep.gamma_lower_at_lambda2 == pytest.approx(1.0, abs=1e-9)
    assert rep.gamma_lower_at_lambda1 > 1.0
    assert "does not hold" in rep.fold_statement
    assert not rep.failures


def test_critical_values_injected(curve):
    lams = {r.lam for r in curve.records}
    assert CRIT.lambda1 in lams and CRIT.lambda2 in lams
    fold = curve.branch(BranchTag.FOLD)
    assert len(fold) == 1 and fold[0].lam == CRIT.lambda1
    end = [r for r in curve.branch(BranchTag.LOWER) if r.lam == CRIT.lambda2]
    assert end[0].sup_norm == pytest.approx(1.0, abs=1e-12) and end[0].x_fb == 0.0


def test_branch_existence_windows(curve):
    for r in curve.records:
        if r.branch is BranchTag.ICE_COVERED:
            assert r.lam < CRIT.lambda2
        if r.branch is BranchTag.LOWER:
            assert CRIT.lambda1 < r.lam <= CRIT.lambda2
        if r.branch is BranchTag.UPPER:
            assert r.lam > CRIT.lambda1


def test_records_sorted_deterministically(curve):
    keys = [(r.lam, r.branch) for r in curve.records]
    assert keys == sorted(keys, key=lambda k: (k[0], ["IceCovered", "Lower", "Fold", "Upper"].index(k[1])))
    again = trace(1.0, 1.0, 0.5, 0.5 * CRIT.lambda1, 1.5 * CRIT.lambda2, 400)
    assert again.to_csv() == curve.to_csv()


def test_records_reproducible(curve):
    for r in curve.records[::17]:
        sols = {s.branch: s for s in enumerate_equilibria(DEFAULT.with_lambda(r.lam))}
        if r.branch in sols:
            assert sols[r.branch].sup_norm == pytest.approx(r.sup_norm, rel=1e-10)


def test_ice_branch_is_linear(curve):
    w = 1.0
    slope = 0.5 * (math.cosh(w) - 1) / (w**2 * math.cosh(w))
    for r in curve.branch(BranchTag.ICE_COVERED):
        assert r.sup_norm == pytest.approx(slope * r.lam, rel=1e-13)


def test_upper_branch_grows(curve):
    up = curve.branch(BranchTag.UPPER)
    assert all(b.sup_norm > a.sup_norm for a, b in zip(up, up[1:]))
    far = trace(1.0, 1.0, 0.5, 10.0, 1000.0, 50, refine_fold=False).branch(BranchTag.UPPER)
    assert far[-1].sup_norm > 100 * far[0].sup_norm / 10


def test_swapped_lower_points_rejected(curve):
    recs = list(curve.records)
    idx = [i for i, r in enumerate(recs) if r.branch is BranchTag.LOWER][5:7]
    a, b = recs[idx[0]], recs[idx[1]]
    recs[idx[0]] = replace(a, sup_norm=b.sup_norm)
    recs[idx[1]] = replace(b, sup_norm=a.sup_norm)
    bad = BifurcationCurve(recs, curve.critical, curve.params)
    with pytest.raises(ShapeViolation) as exc:
        verify_s_shape(bad)
    assert exc.value.pair is not None and exc.value.branch == "Lower"


def test_too_few_records():
    short = trace(1.0, 1.0, 0.5, 0.5 * CRIT.lambda1, 0.9 * CRIT.lambda1, 5)
    with pytest.raises(ShapeViolation):
        verify_s_shape(short)


def test_fold_gap_square_root():
    gaps = fold_gaps(DEFAULT)
    assert all(b[1] < a[1] for a, b in zip(gaps, gaps[1:]))
    slope = np.polyfit(np.log([h for h, _ in gaps]), np.log([g for _, g in gaps]), 1)[0]
    assert 0.4 < slope < 0.6


def test_grid_independence():
    lo, hi = 0.5 * CRIT.lambda1, 1.5 * CRIT.lambda2
    coarse = trace(1.0, 1.0, 0.5, lo, hi, 201, refine_fold=False)
    fine = trace(1.0, 1.0, 0.5, lo, hi, 401, refine_fold=False)
    fine_map = {(r.lam, r.branch): r.sup_norm for r in fine.records}
    shared = 0
    for r in coarse.records:
        key = (r.lam, r.branch)
        if key in fine_map:
            shared += 1
            assert fine_map[key] == pytest.approx(r.sup_norm, rel=1e-12)
    assert shared > 100


def test_csv_columns_and_empty_x_fb(curve):
    rows = list(csv.DictReader(io.StringIO(curve.to_csv())))
    assert list(rows[0]) == ["lambda", "branch", "sup_norm", "x_fb", "status"]
    ice = [r for r in rows if r["branch"] == "IceCovered"]
    assert all(r["x_fb"] == "" for r in ice)
    assert float(ice[0]["sup_norm"]) == build_ice_covered(DEFAULT.with_lambda(float(ice[0]["lambda"]))).sup_norm


def test_bad_arguments():
    with pytest.raises(ValueError):
        trace(1, 1, 0.5, 2.0, 1.0, 10)
    with pytest.raises(ValueError):
        trace(1, 1, 0.5, 1.0, 2.0, 1)


def test_other_parameters_s_shaped():
    for w, mu, f0 in ((0.4, 2.0, 0.3), (2.0, 0.5, 0.8)):
        crit = compute_critical(ModelParams(w, mu, f0))
        c = trace(w, mu, f0, 0.5 * crit.lambda1, 1.5 * crit.lambda2, 100)
        assert verify_s_shape(c).passed


def test_branch_sup_norm_formula():
    p = DEFAULT.with_lambda(5.0)
    for sol in enumerate_equilibria(p):
        if sol.x_fb is not None:
            assert branch_sup_norm(p, sol.x_fb) == pytest.approx(float(sol.u(0.0)), rel=1e-14)
