import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsquant.bandwidth import (B_JACK_MAX, B_MAX, clamp, compose, correction_factor,
                               correction_from_scores, independence_bandwidth, plan, yu_jones_factor)
from nsquant.curves import SeriesSample
from nsquant.simulate import generate, scenario_model


def test_yu_jones_factor_at_median():
    assert yu_jones_factor(0.5) == pytest.approx((0.25 / (1 / (2 * math.pi))) ** 0.2, rel=1e-12)
    assert yu_jones_factor(0.5) == pytest.approx(1.0945, abs=1e-4)


@given(st.floats(0.01, 0.99))
def test_yu_jones_factor_minimised_at_median(a):
    assert yu_jones_factor(a) >= yu_jones_factor(0.5) - 1e-12
    assert yu_jones_factor(a) == pytest.approx(yu_jones_factor(1 - a), rel=1e-9)


def test_upper_levels_get_wider_bandwidths():
    rng = np.random.default_rng(0)
    t = np.arange(1, 301) / 300
    s = SeriesSample(np.sin(4 * t) + rng.standard_normal(300))
    assert independence_bandwidth(s, 0.9) > independence_bandwidth(s, 0.5)


def test_scenario_a_independence_bandwidth_in_range():
    model = scenario_model("a")
    b = [independence_bandwidth(generate(model, 300, np.random.default_rng([1, r])), 0.5)
         for r in range(30)]
    assert 0.05 <= np.median(b) <= 0.35


def test_composition_rules():
    p = compose(300, 0.1, 1.0)
    assert p.b_star == 0.1 and p.b_jack == 0.2
    assert p.b_isdt == pytest.approx(0.2 * 300 ** (-1 / 45))
    assert p.b_isdt == pytest.approx(0.1760, abs=5e-4)
    assert p.m_tilde == 6
    p = compose(300, 0.05, 1.3)
    assert p.b_jack == 2 * p.b_star and p.b_star == 0.05 * 1.3


def test_clamps():
    assert clamp(0.6, 300) == B_MAX
    assert clamp(1e-4, 300) == 5 / 300
    p = compose(300, 0.3, 1.0)
    assert p.b_jack == B_JACK_MAX
    assert p.b_isdt == pytest.approx(B_JACK_MAX * 300 ** (-1 / 45))
    assert compose(300, 0.3, 1.0).b_star == 0.3
    # the wider jackknife fit still respects the global cap
    assert math.sqrt(2) * p.b_jack <= B_MAX + 1e-15


def test_correction_factor_of_constant_scores_is_zero():
    assert correction_from_scores(np.full(100, 0.5), 0.5) == 0.0


def test_iid_correction_factor_near_one():
    rng = np.random.default_rng(2)
    vals = [correction_factor(SeriesSample(rng.standard_normal(2000)), 0.5, 0.1) for _ in range(12)]
    assert np.mean(vals) == pytest.approx(1.0, rel=0.10)


def test_positive_dependence_raises_correction_factor():
    # strongly positively autocorrelated scores: constant AR coefficient 0.7
    from nsquant.simulate import TvAR1Model
    model = TvAR1Model(lambda t: 0 * t, lambda t: 0 * t + 0.7, lambda t: 0 * t + 1)
    vals = [correction_factor(generate(model, 600, np.random.default_rng([3, r])), 0.5, 0.15)
            for r in range(10)]
    assert np.mean(vals) > 1


def test_scenario_a_correction_factor_above_one_on_average():
    # integrated long-run variance of the median scores is about 0.2995 > 1/4,
    # so rho* is about 1.037; short blocks bias the estimate down at small n
    model = scenario_model("a")
    vals = [correction_factor(generate(model, 2000, np.random.default_rng([4, r])), 0.5, 0.1)
            for r in range(10)]
    assert np.mean(vals) > 1


@settings(max_examples=15)
@given(st.floats(-50, 50), st.floats(0.2, 20))
def test_plan_location_scale_invariant(c, s):
    x = np.random.default_rng(5).standard_normal(120).cumsum() / 5
    p0 = plan(SeriesSample(x), 0.5)
    p1 = plan(SeriesSample(s * x + c), 0.5)
    assert p1.rho_star_hat == pytest.approx(p0.rho_star_hat, rel=1e-9)
    assert p1.b_ind == pytest.approx(p0.b_ind, rel=1e-6)


def test_plan_deterministic_and_validates_length():
    x = SeriesSample(np.random.default_rng(6).standard_normal(200))
    assert plan(x, 0.7) == plan(x, 0.7)
    with pytest.raises(ValueError):
        plan(SeriesSample(np.arange(40.0)), 0.5)
