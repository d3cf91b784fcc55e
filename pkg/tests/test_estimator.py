import json
import math
import time

import numpy as np
import pytest

from hermite_quantiles.coefficients import fit_batch
from hermite_quantiles.density import CdfVariant
from hermite_quantiles.estimator import (
    DistributionSnapshot,
    EstimatorConfig,
    GaussHermiteEstimator,
    cdf_at,
    effective_window,
    pdf_at,
    quantile,
)
from hermite_quantiles.oracle import sample_quantile
from hermite_quantiles.quantile import RootFinderSettings
from hermite_quantiles.simulate import StreamModel, gh_estimates
from hermite_quantiles.special_functions import DomainError


def test_config_defaults():
    c = EstimatorConfig()
    assert (c.n_terms, c.mode, c.lam, c.standardize) == (6, "static", 0.05, True)
    assert c.cdf_variant is CdfVariant.ALTERNATIVE
    assert c.root_finder == RootFinderSettings()


def test_config_validation():
    for kwargs in ({"n_terms": 0}, {"n_terms": 33}, {"mode": "x"}, {"lam": 0.0}, {"lam": 1.5},
                   {"cdf_variant": "nope"}):
        with pytest.raises(ValueError):
            EstimatorConfig(**kwargs)


def test_config_flat_dict_round_trip():
    c = EstimatorConfig(n_terms=8, mode="ewgh", lam=0.01, standardize=False, cdf_variant="full_line",
                        root_finder=RootFinderSettings(tolerance=1e-10, bracket=(-9.0, 9.0)))
    d = c.to_dict()
    assert all(not isinstance(v, dict) for v in d.values())
    assert EstimatorConfig.from_dict(json.loads(json.dumps(d))) == c
    assert EstimatorConfig.from_dict({"n_terms": "4", "standardize": "false"}) == EstimatorConfig(n_terms=4, standardize=False)
    with pytest.raises(ValueError):
        EstimatorConfig.from_dict({"bogus": 1})


def test_chi2_median_over_runs():
    meds = []
    for r in range(100):
        est = GaussHermiteEstimator(n_terms=6)
        est.observe_many(np.random.default_rng(1000 + r).chisquare(5, 4000))
        meds.append(est.quantile(0.5).value)
    assert abs(np.median(meds) - 4.3515) < 0.15


def test_first_observation_warmup():
    est = GaussHermiteEstimator()
    est.observe(3.0)
    snap = est.snapshot()
    assert (snap.mu, snap.sigma, snap.count) == (3.0, 1.0, 1)
    r = est.quantile(0.5)
    assert r.converged
    assert math.isfinite(est.cdf_at(2.0)) and math.isfinite(est.pdf_at(2.0))


def test_empty_snapshot_raises():
    with pytest.raises(ValueError):
        GaussHermiteEstimator().snapshot()


def test_non_finite_rejected_state_unchanged():
    est = GaussHermiteEstimator(mode="ewgh", lam=0.1)
    est.observe_many([0.1, 0.5, -0.3])
    before = est.snapshot().to_json()
    for bad in (math.nan, math.inf):
        with pytest.raises(DomainError):
            est.observe(bad)
    assert est.snapshot().to_json() == before


def test_snapshot_immutable_and_repeatable():
    rng = np.random.default_rng(1)
    est = GaussHermiteEstimator()
    est.observe_many(rng.normal(size=300))
    snap = est.snapshot()
    q = snap.quantile(0.8).value
    c = snap.cdf_at(0.3)
    text = snap.to_json()
    assert est.snapshot().to_json() == text
    est.observe_many(rng.normal(size=100))
    assert snap.quantile(0.8).value == q
    assert snap.cdf_at(0.3) == c
    assert snap.to_json() == text
    with pytest.raises(ValueError):
        snap.a_hat[0] = 2.0


def test_snapshot_json_round_trip():
    rng = np.random.default_rng(2)
    est = GaussHermiteEstimator(mode="ewgh", lam=0.05, n_terms=8)
    est.observe_many(rng.exponential(size=500))
    snap = est.snapshot()
    d = json.loads(snap.to_json())
    assert {"mode", "lambda", "count", "a_hat", "moments", "config"} <= set(d)
    assert set(d["moments"]) == {"mu", "sigma", "count"}
    back = DistributionSnapshot.from_json(snap.to_json())
    assert np.array_equal(back.a_hat, snap.a_hat)
    assert (back.mu, back.sigma, back.count, back.config) == (snap.mu, snap.sigma, snap.count, snap.config)
    for x in np.linspace(-1, 5, 13):
        assert back.cdf_at(x) == pytest.approx(snap.cdf_at(x), abs=1e-15)
    for p in (0.1, 0.5, 0.9):
        assert back.quantile(p).value == pytest.approx(snap.quantile(p).value, abs=1e-15)


def test_normal_stream_queries():
    rng = np.random.default_rng(3)
    data = rng.normal(size=5000)
    est = GaussHermiteEstimator()
    est.observe_many(data)
    snap = est.snapshot()
    assert 0.47 <= cdf_at(snap, 0.0) <= 0.53
    assert abs(quantile(snap, 0.5).value - sample_quantile(data, 0.5)) < 0.05
    q9 = quantile(snap, 0.9)
    assert abs(cdf_at(snap, q9.value) - 0.9) <= snap.config.root_finder.tolerance
    assert pdf_at(snap, 0.0) == pytest.approx(snap.pdf_at(0.0))


def test_unit_mapping():
    rng = np.random.default_rng(4)
    est = GaussHermiteEstimator()
    est.observe_many(50 + 4 * rng.normal(size=1000))
    snap = est.snapshot()
    z = 0.7
    x = snap.mu + snap.sigma * z
    raw = DistributionSnapshot.from_coefficients(snap.a_hat)
    assert snap.cdf_at(x) == pytest.approx(raw.cdf_at(z), abs=1e-14)
    assert snap.pdf_at(x) == pytest.approx(raw.pdf_at(z) / snap.sigma, rel=1e-13)


def test_static_streaming_equals_batch():
    rng = np.random.default_rng(5)
    data = rng.normal(size=10_000)
    est = GaussHermiteEstimator(standardize=False)
    est.observe_many(data)
    assert np.allclose(est.snapshot().a_hat, fit_batch(data, 6).a_hat, rtol=1e-12, atol=1e-15)


def test_warm_start_cache():
    rng = np.random.default_rng(6)
    est = GaussHermiteEstimator()
    est.observe_many(rng.normal(size=200))
    first = est.quantile(0.9)
    est.observe(0.1)
    second = est.quantile(0.9)
    assert second.iterations <= first.iterations
    assert est._warm[0.9] == second.value


def test_effective_window():
    assert [effective_window(l) for l in (0.01, 0.05, 0.1, 0.2)] == [687, 135, 66, 31]
    lams = np.linspace(0.001, 0.999, 400)
    w = [effective_window(l) for l in lams]
    assert all(a >= b for a, b in zip(w, w[1:]))
    for bad in (0.0, 1.0, 1.5, -0.1):
        with pytest.raises(DomainError):
            effective_window(bad)


def test_change_point_tracking():
    model = StreamModel("change_point", {"s": 500, "mu1": 0.0, "mu2": 5.0})
    errs = []
    for r in range(100):
        est = GaussHermiteEstimator(mode="ewgh", lam=0.05)
        est.observe_many(model.sample(np.random.default_rng(r), 1000))
        errs.append(est.quantile(0.5).value - 5.0)
    assert abs(np.mean(errs)) < 0.5


def test_determinism():
    def run():
        est = GaussHermiteEstimator(mode="ewgh", lam=0.1)
        est.observe_many(np.random.default_rng(7).gamma(2.0, size=400))
        return est.snapshot().to_json(), est.quantile(0.3).value
    assert run() == run()


@pytest.mark.parametrize("config", [EstimatorConfig(), EstimatorConfig(mode="ewgh", lam=0.05, n_terms=8)])
def test_batched_engine_matches_estimator(config):
    rng = np.random.default_rng(8)
    streams = rng.exponential(size=(4, 300)) * 3 + 1e6
    steps = np.array([5, 100, 300])
    batched = gh_estimates(streams, config, (0.5, 0.9), steps)
    for r in range(4):
        est = GaussHermiteEstimator(config)
        for j, x in enumerate(streams[r], start=1):
            est.observe(x)
            if j in steps:
                c = list(steps).index(j)
                for p in (0.5, 0.9):
                    assert batched[p][r, c] == pytest.approx(est.quantile(p).value, abs=1e-6)


def test_observe_constant_time():
    est = GaussHermiteEstimator()
    rng = np.random.default_rng(9)
    early = rng.normal(size=2000)
    late = rng.normal(size=2000)
    est.observe_many(rng.normal(size=1000))
    t0 = time.perf_counter()
    est.observe_many(early)
    t_early = time.perf_counter() - t0
    est.observe_many(rng.normal(size=50_000))
    t0 = time.perf_counter()
    est.observe_many(late)
    t_late = time.perf_counter() - t0
    assert t_late < 3 * t_early
