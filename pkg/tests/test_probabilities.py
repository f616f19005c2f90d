"""Probability and curve tests against constant-hazard closed forms."""

import numpy as np
import pytest

from idmkit.estimation import FitConfig, FittedModel, PenaltyWeights, fit
from idmkit.exceptions import OrderingError
from idmkit.model import constant_hazard_model
from idmkit.probabilities import (
    CurveTable,
    conditional_probability,
    conditional_table,
    confidence_bands,
    marginal_risk,
    prevalence_curve,
    risk_curve,
    state1_survival,
    transition_probabilities,
)

from conftest import aged_constant_records
from oracles import p00_const, p01_const, prevalence_const, risk_const

A, B, C = 0.04, 0.02, 0.10


@pytest.fixture(scope="module")
def model():
    return constant_hazard_model(A, B, C)


@pytest.fixture(scope="module")
def fitted_spline():
    recs = aged_constant_records(950, n=500)
    return fit(recs, FitConfig(form="spline", n_interior=4,
                               weights=PenaltyWeights(10.0, 10.0, 10.0)))


def test_same_age_is_identity(model):
    assert transition_probabilities(model, 70.0, 70.0) == (1.0, 0.0, 0.0)


def test_constant_hazard_closed_forms(model):
    p00, p01, p02 = transition_probabilities(model, 60.0, 70.0)
    assert p00 == pytest.approx(p00_const(A, B, 10.0), rel=1e-9)
    assert p01 == pytest.approx(p01_const(A, B, C, 10.0), rel=1e-9)
    assert p02 == pytest.approx(1.0 - p00 - p01, abs=1e-12)


def test_no_onset_means_no_p01():
    m = constant_hazard_model(1e-300, B, C)
    p00, p01, _ = transition_probabilities(m, 60.0, 80.0)
    assert p01 == pytest.approx(0.0, abs=1e-12)
    assert p00 == pytest.approx(np.exp(-B * 20.0), rel=1e-9)


def test_ordering_error(model):
    with pytest.raises(OrderingError):
        transition_probabilities(model, 80.0, 70.0)


def test_probability_conservation_random_pairs(model):
    rng = np.random.default_rng(31)
    for _ in range(200):
        s = rng.uniform(60.0, 95.0)
        t = s + rng.uniform(0.0, 40.0)
        p00, p01, p02 = transition_probabilities(model, s, t)
        assert abs(p00 + p01 + p02 - 1.0) <= 1e-8
        assert 0.0 <= min(p00, p01, p02) and max(p00, p01, p02) <= 1.0


def test_chapman_kolmogorov(model):
    rng = np.random.default_rng(32)
    for _ in range(50):
        s, t, u = np.sort(rng.uniform(60.0, 100.0, 3))
        p00_st, p01_st, _ = transition_probabilities(model, s, t)
        p01_su = transition_probabilities(model, s, u)[1]
        p01_tu = transition_probabilities(model, t, u)[1]
        composed = p00_st * p01_tu + p01_st * state1_survival(model, t, u)
        assert abs(p01_su - composed) <= 1e-6


def test_risk_curve_closed_form(model):
    curve = risk_curve(model, ages=np.array([60.0, 70.0]))
    assert curve.estimate[0] == 0.0
    assert curve.estimate[1] == pytest.approx(risk_const(A, B, 10.0), rel=1e-9)


def test_risk_limit_is_competing_fraction(model):
    curve = risk_curve(model, ages=np.array([60.0, 1000.0]))
    assert curve.estimate[-1] == pytest.approx(A / (A + B), rel=1e-6)


def test_risk_nondecreasing_and_bounded(model):
    curve = risk_curve(model, ages=np.arange(60.0, 111.0))
    assert np.all(np.diff(curve.estimate) >= -1e-12)
    assert np.all(curve.estimate <= A / (A + B) + 1e-9)


def test_prevalence_closed_form(model):
    curve = prevalence_curve(model, ages=np.array([60.0, 70.0]))
    assert curve.estimate[0] == 0.0
    assert curve.estimate[1] == pytest.approx(prevalence_const(A, B, C, 10.0), rel=1e-9)


def test_prevalence_vanishes_when_ill_die_instantly():
    m = constant_hazard_model(A, B, 100.0)
    curve = prevalence_curve(m, ages=np.array([60.0, 75.0, 90.0]))
    assert np.all(curve.estimate < 0.01)


def test_risk_dominates_p01(model):
    ages = np.arange(61.0, 100.0, 3.0)
    rc = risk_curve(model, ages=ages)
    for age, r in zip(ages, rc.estimate):
        p01 = transition_probabilities(model, 60.0, float(age))[1]
        assert r >= p01 - 1e-10


def test_conditional_zero_window(model):
    est = conditional_probability(model, s=70.0, horizon=0.0)
    assert est.estimate == 0.0


def test_conditional_age_homogeneous(model):
    # constant hazards make the 10-year conditional risk age-invariant
    expected = risk_const(A, B, 10.0)
    for s in (60.0, 67.0, 80.0):
        est = conditional_probability(model, s=s, horizon="10y")
        assert est.estimate == pytest.approx(expected, rel=1e-9)


def test_conditional_monotone_in_window(model):
    vals = [conditional_probability(model, s=65.0, horizon=h).estimate
            for h in ("10y", "20y", "ever")]
    assert vals[0] < vals[1] < vals[2]


def test_conditional_table_shape(model):
    table = conditional_table(model)
    assert list(table.columns) == ["age", "10y", "20y", "ever"]
    assert list(table.age) == [60.0, 65.0, 70.0, 75.0, 80.0]
    # the 20-year cell at age 80 stays blank (target age beyond support)
    assert np.isnan(table.loc[table.age == 80.0, "20y"]).all()
    assert table.drop(columns="20y").notna().all().all()


def test_curvetable_validation():
    with pytest.raises(ValueError):
        CurveTable("risk", 60.0, np.array([60.0, 61.0]), np.array([0.2, 0.1]),
                   np.array([0.2, 0.1]), np.array([0.2, 0.1]))
    with pytest.raises(ValueError):
        CurveTable("prevalence", 60.0, np.array([60.0]), np.array([0.5]),
                   np.array([0.6]), np.array([0.7]))


def test_zero_covariance_bands_collapse(model):
    fm = FittedModel(model=model, weights=PenaltyWeights(), logpl=0.0, loglik=0.0,
                     covariance=np.zeros((model.n_params, model.n_params)),
                     convergence={})
    curve = confidence_bands(fm, "risk", ages=np.arange(60.0, 91.0), draws=300, seed=1)
    assert curve.lo95 == pytest.approx(curve.estimate, abs=1e-12)
    assert curve.hi95 == pytest.approx(curve.estimate, abs=1e-12)


def test_bands_contain_estimate_and_are_seeded(fitted_spline):
    ages = np.arange(60.0, 96.0, 2.0)
    c1 = confidence_bands(fitted_spline, "risk", ages=ages, draws=400, seed=5)
    c2 = confidence_bands(fitted_spline, "risk", ages=ages, draws=400, seed=5)
    assert np.array_equal(c1.lo95, c2.lo95) and np.array_equal(c1.hi95, c2.hi95)
    assert np.all(c1.lo95 <= c1.estimate + 1e-12)
    assert np.all(c1.estimate <= c1.hi95 + 1e-12)
    assert np.all((0.0 <= c1.lo95) & (c1.hi95 <= 1.0))


def test_band_endpoints_stable_in_draw_count(fitted_spline):
    # the 2000-draw stream extends the 1000-draw stream (same seed), so
    # percentile endpoints move only by Monte-Carlo refinement
    ages = np.arange(60.0, 89.0, 4.0)
    for quantity in ("risk", "prevalence"):
        c1000 = confidence_bands(fitted_spline, quantity, ages=ages, draws=1000, seed=7)
        c2000 = confidence_bands(fitted_spline, quantity, ages=ages, draws=2000, seed=7)
        assert np.abs(c1000.lo95 - c2000.lo95).max() < 0.01
        assert np.abs(c1000.hi95 - c2000.hi95).max() < 0.01


def test_band_metadata(fitted_spline):
    curve = confidence_bands(fitted_spline, "risk", ages=np.arange(60.0, 81.0),
                             draws=250, seed=3)
    assert curve.metadata["band_method"] == "normal-resampling"
    assert curve.metadata["draws"] == 250


def test_bands_need_enough_draws(fitted_spline):
    with pytest.raises(ValueError):
        confidence_bands(fitted_spline, "risk", draws=50)


def test_extrapolation_flagged(fitted_spline):
    hi = fitted_spline.model.upper_boundary()
    curve = risk_curve(fitted_spline, ages=np.array([60.0, hi + 5.0]))
    assert curve.metadata["extrapolated"]


def test_marginal_risk_averages_profiles(model):
    z = np.zeros((5, 0))
    base = risk_curve(model, ages=np.array([60.0, 85.0])).estimate[1]
    assert marginal_risk(model, z, 60.0, 85.0) == pytest.approx(base, rel=1e-9)


def test_curve_frame_columns(model):
    frame = risk_curve(model, ages=np.arange(60.0, 70.0)).to_frame()
    assert list(frame.columns) == ["age", "estimate", "lo95", "hi95", "quantity", "profile"]
