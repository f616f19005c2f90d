"""Likelihood-contribution tests against constant-hazard closed forms."""

import math

import numpy as np
import pytest

from idmkit.exceptions import InvalidRecordError
from idmkit.likelihood import (
    log_likelihood_contribution,
    pairwise_sum,
    total_log_likelihood,
)
from idmkit.model import constant_hazard_model
from idmkit.records import ObservationPattern, SubjectRecord, classify_pattern

from conftest import mixed_pattern_records
from oracles import (
    loglik_dead_inconclusive_const,
    loglik_exact_onset_const,
    loglik_healthy_censored_const,
)

A, B, C = 0.04, 0.02, 0.10


@pytest.fixture(scope="module")
def model():
    return constant_hazard_model(A, B, C)


# -- pattern classification ---------------------------------------------------


def test_classify_healthy_censored():
    rec = SubjectRecord("s", 60.0, 70.0)
    assert classify_pattern(rec) is ObservationPattern.HEALTHY_CENSORED


def test_classify_ill_then_dead():
    rec = SubjectRecord("s", 60.0, 70.0, onset_interval=(70.0, 72.0), death_age=80.0)
    assert classify_pattern(rec) is ObservationPattern.ILL_THEN_DEAD


def test_classify_dead_inconclusive_flag():
    rec = SubjectRecord("s", 60.0, 78.0, death_age=85.0)
    assert classify_pattern(rec, False) is ObservationPattern.DEAD_INCONCLUSIVE
    assert classify_pattern(rec, True) is ObservationPattern.HEALTHY_THEN_DEAD_CONCLUSIVE


def test_classify_ill_censored():
    rec = SubjectRecord("s", 60.0, 70.0, onset_exact=71.0, last_alive_age=75.0)
    assert classify_pattern(rec) is ObservationPattern.ILL_CENSORED


def test_record_invariants():
    with pytest.raises(InvalidRecordError):
        SubjectRecord("s", 70.0, 65.0)
    with pytest.raises(InvalidRecordError):
        SubjectRecord("s", 60.0, 70.0, onset_interval=(70.0, 69.0))
    with pytest.raises(InvalidRecordError):
        SubjectRecord("s", 60.0, 70.0, onset_interval=(70.0, 75.0), death_age=72.0)


# -- closed-form contributions ---------------------------------------------------


def test_healthy_censored_closed_form(model):
    rec = SubjectRecord("s", 60.0, 70.0)
    assert log_likelihood_contribution(rec, model) == pytest.approx(-0.6, rel=1e-12)
    assert log_likelihood_contribution(rec, model) == pytest.approx(
        loglik_healthy_censored_const(A, B, 60.0, 70.0))


def test_exact_onset_closed_form(model):
    rec = SubjectRecord("s", 60.0, 65.0, onset_exact=65.0, death_age=70.0)
    expected = -0.3 + math.log(A) - 0.5 + math.log(C)
    assert log_likelihood_contribution(rec, model) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(loglik_exact_onset_const(A, B, C, 60.0, 65.0, 70.0))


def test_dead_inconclusive_closed_form(model):
    rec = SubjectRecord("s", 60.0, 78.0, death_age=85.0)
    expected = loglik_dead_inconclusive_const(A, B, C, 60.0, 78.0, 85.0)
    assert log_likelihood_contribution(rec, model) == pytest.approx(expected, rel=1e-9)


def test_inconclusive_reduces_to_conclusive_when_onset_impossible():
    aless = constant_hazard_model(1e-300, B, C)
    rec_inc = SubjectRecord("s", 60.0, 78.0, death_age=85.0)
    rec_con = SubjectRecord("s", 60.0, 78.0, death_age=85.0, conclusive_at_death=True)
    ll_inc = log_likelihood_contribution(rec_inc, aless)
    # conclusive path: S00(e, D) * a02(D); here L < D so survival runs to D
    expected = -B * 25.0 + math.log(B)
    assert ll_inc == pytest.approx(expected, rel=1e-9)
    assert log_likelihood_contribution(rec_con, aless) == pytest.approx(expected, rel=1e-9)


def test_zero_width_window_equals_conclusive(model):
    # death at the last healthy assessment leaves no room for latent onset
    rec_inc = SubjectRecord("s", 60.0, 78.0, death_age=78.0)
    rec_con = SubjectRecord("s", 60.0, 78.0, death_age=78.0, conclusive_at_death=True)
    assert log_likelihood_contribution(rec_inc, model) == pytest.approx(
        log_likelihood_contribution(rec_con, model), rel=1e-12)


def test_inconclusive_exceeds_conclusive(model):
    rec_inc = SubjectRecord("s", 60.0, 78.0, death_age=85.0)
    rec_con = SubjectRecord("s", 60.0, 78.0, death_age=85.0, conclusive_at_death=True)
    assert log_likelihood_contribution(rec_inc, model) > \
        log_likelihood_contribution(rec_con, model)


def test_interval_contribution_between_bounds(model):
    # closed form for the interval integral is p01-like; compare directly
    rec = SubjectRecord("s", 60.0, 70.0, onset_interval=(70.0, 72.0), death_age=80.0)
    from oracles import p01_const

    q = p01_const(A, B, C, 2.0)  # int_70^72 S00(70,u) a S11(u,72) du
    # S11 factor must run to T=80, not 72: adjust by exp(-c*(80-72))
    q *= math.exp(-C * 8.0)
    expected = -0.6 + math.log(q) + math.log(C)
    assert log_likelihood_contribution(rec, model) == pytest.approx(expected, rel=1e-9)


def test_shrinking_interval_converges_to_exact_density(model):
    width = 1e-4
    lo = 70.0
    rec_interval = SubjectRecord("s", 60.0, lo, onset_interval=(lo, lo + width),
                                 death_age=80.0)
    rec_exact = SubjectRecord("s", 60.0, lo, onset_exact=lo, death_age=80.0)
    ll_int = log_likelihood_contribution(rec_interval, model)
    ll_exact = log_likelihood_contribution(rec_exact, model)
    assert ll_int - math.log(width) == pytest.approx(ll_exact, abs=1e-3)


def test_left_truncation_monotonicity(model):
    lls = [log_likelihood_contribution(SubjectRecord("s", e, 70.0), model)
           for e in (60.0, 63.0, 66.0, 69.0, 70.0)]
    assert all(b > a for a, b in zip(lls, lls[1:]))
    assert lls[-1] == pytest.approx(0.0, abs=1e-12)


def test_inflating_death_hazard_decreases_healthy_contribution():
    rec = SubjectRecord("s", 60.0, 70.0)
    base = log_likelihood_contribution(rec, constant_hazard_model(A, B, C))
    inflated = log_likelihood_contribution(rec, constant_hazard_model(A, 2 * B, C))
    assert inflated < base


def test_extended_censoring_adds_unobserved_onset_mass(model):
    rec = SubjectRecord("s", 60.0, 70.0, last_alive_age=76.0)
    plain = log_likelihood_contribution(rec, model)
    extended = log_likelihood_contribution(rec, model, censor_at_last_alive=True)
    # extended multiplies in P(no *observed* illness to 76) < 1, > S00(70,76)
    assert extended < plain
    floor = plain - (A + B) * 6.0
    assert extended > floor


# -- totals ------------------------------------------------------------------


def test_total_empty_is_zero(model):
    assert total_log_likelihood([], model) == 0.0


def test_total_single_record_matches_contribution(model):
    rec = SubjectRecord("s", 60.0, 70.0)
    assert total_log_likelihood([rec], model) == \
        log_likelihood_contribution(rec, model)


def test_total_partitioned_sum_matches_sequential(model):
    recs = mixed_pattern_records(21, n=100)
    seq = total_log_likelihood(recs, model)
    part = total_log_likelihood(recs, model, n_partitions=8)
    assert part == pytest.approx(seq, abs=1e-9)


def test_total_order_independent(model):
    recs = mixed_pattern_records(22, n=60)
    rng = np.random.default_rng(0)
    shuffled = list(recs)
    rng.shuffle(shuffled)
    assert total_log_likelihood(shuffled, model) == \
        pytest.approx(total_log_likelihood(recs, model), abs=1e-9)


def test_pairwise_sum_matches_numpy():
    rng = np.random.default_rng(5)
    vals = rng.normal(size=1037)
    assert pairwise_sum(vals) == pytest.approx(float(np.sum(vals)), abs=1e-12)


def test_numeric_error_names_subject():
    from idmkit.basis import KnotGrid
    from idmkit.exceptions import LikelihoodNumericError
    from idmkit.hazards import HazardSpec
    from idmkit.model import IllnessDeathModel

    grid = KnotGrid(60.0, 100.0, (), order=4)
    dead01 = HazardSpec("0->1", "spline", np.zeros(grid.n_basis), np.zeros(0), grid)
    model = IllnessDeathModel(dead01,
                              HazardSpec("0->2", "weibull", np.array([1.0, 50.0]), np.zeros(0)),
                              HazardSpec("1->2", "weibull", np.array([1.0, 10.0]), np.zeros(0)))
    rec = SubjectRecord("who-am-i", 60.0, 70.0, onset_interval=(70.0, 72.0),
                        last_alive_age=75.0)
    with pytest.raises(LikelihoodNumericError, match="who-am-i"):
        log_likelihood_contribution(rec, model)
    with pytest.raises(LikelihoodNumericError, match="who-am-i"):
        total_log_likelihood([rec], model)
