import math
import statistics

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hermite_quantiles.special_functions import DomainError
from hermite_quantiles.standardize import (
    SIGMA_FLOOR,
    ExpMoments,
    RunningMoments,
    destandardize,
    ewma_moments_step,
    ewma_update,
    standardize,
    welford_step,
    welford_update,
)


def feed(rm, xs):
    for x in xs:
        welford_update(rm, x)
    return rm


def test_welford_small_examples():
    rm = feed(RunningMoments(), [1, 2, 3])
    assert rm.mean == 2 and rm.std == 1
    rm = feed(RunningMoments(), [2, 4, 4, 4, 5, 5, 7, 9])
    assert rm.mean == 5
    assert rm.variance == pytest.approx(4.5714285714, abs=1e-10)
    assert rm.s == pytest.approx(32)


def test_single_observation_not_ready():
    rm = feed(RunningMoments(), [3.5])
    assert rm.std is None and rm.variance is None
    assert rm.location_scale() == (3.5, 1.0)
    assert RunningMoments().location_scale() == (0.0, 1.0)


def test_welford_matches_two_pass():
    rng = np.random.default_rng(0)
    data = rng.uniform(-1e6, 1e6, 10_000)
    rm = feed(RunningMoments(), data)
    assert rm.mean == pytest.approx(statistics.fmean(data), rel=1e-10)
    assert rm.variance == pytest.approx(statistics.variance(data), rel=1e-10)


def test_welford_large_offset():
    rng = np.random.default_rng(1)
    data = 1e9 + rng.normal(size=10_000)
    rm = feed(RunningMoments(), data)
    ref_mean = statistics.fmean(data)
    ref_var = math.fsum((x - ref_mean) ** 2 for x in data) / (len(data) - 1)
    assert rm.mean == pytest.approx(ref_mean, rel=1e-10)
    assert rm.variance == pytest.approx(ref_var, rel=1e-10)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_welford_invariants(xs):
    rm = RunningMoments()
    for i, x in enumerate(xs, 1):
        welford_update(rm, x)
        assert rm.count == i
        assert rm.s >= 0
        assert (rm.std is None) == (i < 2)


def test_welford_step_vectorised():
    xs = np.array([[1.0, 10.0], [3.0, 30.0], [8.0, 20.0]])
    m = xs[0].copy()
    s = np.zeros(2)
    for count, row in enumerate(xs[1:], start=2):
        m, s = welford_step(count, m, s, row)
    assert np.allclose(m, xs.mean(axis=0))
    assert np.allclose(s / 2, xs.var(axis=0, ddof=1))


def test_ewma_examples():
    em = ExpMoments(1.0)
    for x in (3.0, -1.0, 4.0):
        ewma_update(em, x)
    assert em.mu == 4.0 and em.v == 0.0

    em = ExpMoments(0.5)
    ewma_update(em, 0.0)
    ewma_update(em, 2.0)
    assert em.mu == 1.0 and em.v == 1.0


def test_ewma_constant_stream_decay():
    lam = 0.1
    em = ExpMoments(lam)
    for k in range(1, 30):
        ewma_update(em, 7.0)
        assert em.mu == 7.0
        assert em.v == pytest.approx((1 - lam) ** (k - 1), rel=1e-12)


def test_ewma_first_update_sets_unit_variance():
    em = ExpMoments(0.2)
    ewma_update(em, 1e6)
    assert (em.mu, em.v, em.count) == (1e6, 1.0, 1)


@pytest.mark.parametrize("lam", [0.01, 0.05, 0.1, 0.2, 1.0])
def test_ewma_variance_never_negative(lam):
    rng = np.random.default_rng(2)
    mu = np.full(1000, 0.0)
    v = np.ones(1000)
    xs = rng.standard_cauchy((1000, 1000))
    for j in range(1000):
        mu, v = ewma_moments_step(lam, mu, v, xs[:, j])
        assert np.all(v >= 0)


def test_ewma_rejects_bad():
    with pytest.raises(ValueError):
        ExpMoments(0.0)
    em = ExpMoments(0.1)
    with pytest.raises(DomainError):
        ewma_update(em, math.nan)
    assert em.count == 0
    with pytest.raises(DomainError):
        welford_update(RunningMoments(), math.inf)


def test_sigma_floor():
    rm = feed(RunningMoments(), [2.0] * 5)
    assert rm.location_scale() == (2.0, SIGMA_FLOOR)
    em = ExpMoments(1.0)
    ewma_update(em, 1.0)
    ewma_update(em, 1.0)
    assert em.location_scale()[1] == SIGMA_FLOOR


def test_standardize_examples():
    assert standardize(5, 5, 2) == 0
    assert standardize(7, 5, 2) == 1
    for bad in (0.0, -1.0):
        with pytest.raises(DomainError):
            standardize(1.0, 0.0, bad)
        with pytest.raises(DomainError):
            destandardize(1.0, 0.0, bad)


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(1e-3, 1e3))
def test_standardize_round_trip(x, mu, sigma):
    back = destandardize(standardize(x, mu, sigma), mu, sigma)
    assert back == pytest.approx(x, rel=1e-14, abs=1e-14 * (abs(mu) + abs(x) + sigma))
