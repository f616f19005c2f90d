"""Shared fixtures and data generators for the test suite."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from idmkit.records import SubjectRecord

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


def exponential_records(seed, n=2000, a=0.04, b=0.02, c=0.10, entry=0.01, end=120.0,
                        covariate=False):
    """Exactly observed records from constant hazards, left-truncated at entry.

    The wide age range (entry near zero) keeps the Weibull shape parameter
    well identified.
    """
    rng = np.random.default_rng(seed)
    recs = []
    while len(recs) < n:
        i = len(recs)
        cov = {"z": float(rng.integers(0, 2))} if covariate else {}
        t1, t2 = rng.exponential(1 / a), rng.exponential(1 / b)
        if min(t1, t2) <= entry:
            continue
        if min(t1, t2) >= end:
            recs.append(SubjectRecord(f"s{i}", entry, end, last_alive_age=end,
                                      covariates=cov))
        elif t1 < t2:
            d = t1 + rng.exponential(1 / c)
            if d < end:
                recs.append(SubjectRecord(f"s{i}", entry, t1, onset_exact=t1,
                                          death_age=d, covariates=cov))
            else:
                recs.append(SubjectRecord(f"s{i}", entry, t1, onset_exact=t1,
                                          last_alive_age=end, covariates=cov))
        else:
            recs.append(SubjectRecord(f"s{i}", entry, t2, death_age=t2,
                                      covariates=cov, conclusive_at_death=True))
    return recs


def aged_constant_records(seed, n=150, a=0.05, b=0.03, c=0.12, entry=60.0, end=100.0):
    """Constant-hazard records on the age-60+ window (exact observation)."""
    rng = np.random.default_rng(seed)
    recs = []
    while len(recs) < n:
        i = len(recs)
        t1 = entry + rng.exponential(1 / a)
        t2 = entry + rng.exponential(1 / b)
        if t1 < t2 and t1 < end:
            d = t1 + rng.exponential(1 / c)
            if d < end:
                recs.append(SubjectRecord(f"s{i}", entry, t1, onset_exact=t1, death_age=d))
            else:
                recs.append(SubjectRecord(f"s{i}", entry, t1, onset_exact=t1,
                                          last_alive_age=end))
        elif t2 < end:
            recs.append(SubjectRecord(f"s{i}", entry, t2, death_age=t2,
                                      conclusive_at_death=True))
        else:
            recs.append(SubjectRecord(f"s{i}", entry, end, last_alive_age=end))
    return recs


def mixed_pattern_records(seed, n=40, covariates=("sex", "edu")):
    """A small zoo covering every observation pattern, for objective checks."""
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n):
        cov = {name: float(rng.integers(0, 2)) for name in covariates}
        e = rng.uniform(60, 65)
        left = e + rng.uniform(0.5, 15)
        kind = i % 5
        if kind == 0:
            recs.append(SubjectRecord(f"h{i}", e, left, covariates=cov,
                                      last_alive_age=left + rng.uniform(0, 5)))
        elif kind == 1:
            recs.append(SubjectRecord(f"c{i}", e, left, death_age=left + rng.uniform(0.5, 6),
                                      covariates=cov, conclusive_at_death=True))
        elif kind == 2:
            recs.append(SubjectRecord(f"x{i}", e, left, death_age=left + rng.uniform(0.5, 8),
                                      covariates=cov))
        elif kind == 3:
            right = left + rng.uniform(0.5, 3)
            dead = bool(rng.integers(0, 2))
            recs.append(SubjectRecord(
                f"i{i}", e, left, onset_interval=(left, right),
                death_age=right + rng.uniform(0.2, 5) if dead else None,
                last_alive_age=None if dead else right + rng.uniform(0, 4),
                covariates=cov))
        else:
            onset = left + rng.uniform(0, 2)
            dead = bool(rng.integers(0, 2))
            recs.append(SubjectRecord(
                f"e{i}", e, left, onset_exact=onset,
                death_age=onset + rng.uniform(0.2, 5) if dead else None,
                last_alive_age=None if dead else onset + rng.uniform(0.5, 4),
                covariates=cov))
    return recs
