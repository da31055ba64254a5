import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gnp.confidence import (ConfidenceInterval, IntervalLoss, cd_tail_curve, check_eposterior_bound,
                            curve_grid, curves_csv, e_ci_exact, e_ci_halfwidth_for_b,
                            e_ci_sufficient, e_posterior_curve, g_of_c, standard_ci,
                            sufficient_halfwidth)
from gnp.evariables import NormalECollection

import oracles

COLL = NormalECollection(100, 0.05)
Z975 = 1.9599639845400538
EXACT_RIGHT = 1.2716202887668269


def test_standard_ci_running_example():
    ci = standard_ci(1.0, 100, 0.05)
    assert round(ci.lo, 3) == 0.804 and round(ci.hi, 3) == 1.196
    ci = standard_ci(0.0, 1, 0.05)
    assert ci.hi == pytest.approx(Z975, rel=1e-14)
    assert oracles.phi_quantile(0.975) == pytest.approx(Z975, rel=1e-15)


def test_standard_ci_alpha_one_degenerate():
    ci = standard_ci(0.3, 10, 1.0)
    assert ci.lo == ci.hi == 0.3


def test_sufficient_at_matching_design():
    ci = e_ci_sufficient(1.0, 100, 0.05, COLL)
    assert ci.hi - 1.0 == pytest.approx(math.sqrt(2 * math.log(40) / 100), rel=1e-14)
    assert round(ci.lo, 3) == 0.728 and round(ci.hi, 3) == 1.272


def test_g_of_c_minimum():
    assert g_of_c(1) == 1
    assert g_of_c(4) == g_of_c(0.25) == 1.25


def test_exact_matches_root_oracle():
    ci = e_ci_exact(1.0, 100, 0.05, COLL)
    assert not ci.fallback
    assert ci.hi == pytest.approx(EXACT_RIGHT, abs=2e-9)
    assert oracles.e_ci_exact_right(1.0, 100, 0.05, 100, 0.05) == pytest.approx(EXACT_RIGHT, rel=1e-14)


def test_exact_alpha_one_still_contains_mle():
    ci = e_ci_exact(0.2, 100, 1.0, COLL)
    assert ci.lo < 0.2 < ci.hi


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5000), st.floats(0.001, 0.5), st.floats(1, 1000), st.floats(0.001, 0.5))
def test_exact_inside_sufficient(n, alpha, nstar, astar):
    coll = NormalECollection(nstar, astar)
    ex = e_ci_exact(0.0, n, alpha, coll)
    suff = e_ci_sufficient(0.0, n, alpha, coll)
    assert suff.contains_interval(ex)
    # at the exact boundary S_theta reaches 1/alpha
    if not ex.fallback:
        assert coll.log_evaluate(ex.hi, 0.0, n) >= math.log(1 / alpha) - 1e-6


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5000), st.floats(0.001, 0.2), st.floats(0.001, 0.2))
def test_sufficient_nested_in_alpha(n, a1, a2):
    lo, hi = sorted((a1, a2))
    assert sufficient_halfwidth(n, lo, COLL) >= sufficient_halfwidth(n, hi, COLL) - 1e-15


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5000), st.floats(0.001, 0.5), st.floats(1, 1000), st.floats(0.001, 0.5))
def test_sufficient_radius_guarantees_threshold(n, alpha, nstar, astar):
    coll = NormalECollection(nstar, astar)
    h = sufficient_halfwidth(n, alpha, coll)
    assert coll.log_evaluate(h, 0.0, n) >= math.log(1 / alpha) - 1e-9


def test_width_ratio():
    ratio = e_ci_sufficient(1.0, 100, 0.05, COLL).half_width / standard_ci(1.0, 100, 0.05).half_width
    assert 1.38 <= ratio <= 1.39


def test_halfwidth_for_b():
    assert e_ci_halfwidth_for_b(100, 20, COLL) == pytest.approx(math.sqrt(2 * math.log(40) / 100), rel=1e-14)
    c = math.log(2) / math.log(40)
    assert e_ci_halfwidth_for_b(100, 1, COLL) == pytest.approx(math.sqrt(2 * math.log(2) / 100) * g_of_c(c))
    # four times the sample with four times the design keeps c = 1 and halves the width
    big = NormalECollection(400, 0.05)
    assert e_ci_halfwidth_for_b(400, 20, big) == pytest.approx(e_ci_halfwidth_for_b(100, 20, COLL) / 2)
    arr = e_ci_halfwidth_for_b(100, np.array([1.0, 20.0]), COLL)
    assert arr.shape == (2,) and arr[1] == pytest.approx(0.27162, abs=1e-5)
    with pytest.raises(ValueError):
        e_ci_halfwidth_for_b(100, 0.5, COLL)


def test_eposterior_curve_values():
    c = e_posterior_curve(COLL, 1.0, 100, [1.0, 1.0 + COLL.spacing])
    assert c.values[0] == pytest.approx(40)
    assert c.capped[0] == 1.0
    assert c.capped[1] == pytest.approx(0.05, rel=1e-5)


def test_cd_tail_curve_values():
    t = cd_tail_curve(1.0, 100, [1.0, 1.0 + Z975 / 10, 1.0 + COLL.spacing])
    assert t[0] == 1.0
    assert t[1] == pytest.approx(0.05, rel=1e-12)
    expected = 2 * (1 - oracles.phi_cdf(math.sqrt(2 * math.log(40))))
    assert expected == pytest.approx(0.006603540795689922, rel=1e-14)
    assert t[2] == pytest.approx(expected, rel=1e-12)


def test_eposterior_bound_checks():
    a = e_ci_halfwidth_for_b(100, 20, COLL)
    ci = ConfidenceInterval(1.0 - a, 1.0 + a, 20, "e-b")
    assert check_eposterior_bound(COLL, 1.0, 100, IntervalLoss(20), ci)
    point = ConfidenceInterval(1.0, 1.0, 20, "e-b")
    assert not check_eposterior_bound(COLL, 1.0, 100, IntervalLoss(20), point)
    assert check_eposterior_bound(COLL, 1.0, 100, IntervalLoss(1), point)


def test_interval_loss():
    loss = IntervalLoss(5)
    assert loss(0.0, (-1, 1)) == 0 and loss(2.0, (-1, 1)) == 5
    with pytest.raises(ValueError):
        IntervalLoss(0.5)


def test_curve_grid_count():
    g = curve_grid(0.0, 1.0, 0.1)
    assert len(g) == 11
    assert len(curve_grid(0.5, 1.5, 0.001)) == 1001


def test_curves_csv_shape():
    text = curves_csv(COLL, 1.0, 100, curve_grid(0.9, 1.1, 0.1))
    rows = text.strip().split("\n")
    assert rows[0] == "theta,e_posterior_capped,cd_tail"
    assert len(rows) == 4
    assert rows[2].split(",")[2] == "1"


def test_interval_json_rounding():
    ci = e_ci_sufficient(1.0, 100, 0.05, COLL)
    assert '"lo": 0.728, "hi": 1.272' in ci.to_json(3)
