import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hermite_quantiles.density import CdfVariant, cdf, total_mass
from hermite_quantiles.estimator import DistributionSnapshot, EstimatorConfig, GaussHermiteEstimator
from hermite_quantiles.quantile import (
    QuantileResult,
    RootFinderSettings,
    invert_cdf,
    is_below_quantile,
    refine,
    solve_standardized,
    solve_standardized_batch,
)

NORMAL = statistics.NormalDist()
PS = [round(0.01 * i, 2) for i in range(1, 100)]


def normal_snapshot(n_terms=6, variant="alternative"):
    a = np.zeros(n_terms + 1)
    a[0] = 1.0
    return DistributionSnapshot.from_coefficients(a, EstimatorConfig(n_terms=n_terms, cdf_variant=variant))


def fitted_snapshot(seed, n=400, kind="normal", n_terms=6):
    rng = np.random.default_rng(seed)
    data = {"normal": rng.normal, "chi2": lambda size: rng.chisquare(5, size),
            "exp": lambda size: rng.exponential(1.0, size)}[kind](size=n)
    est = GaussHermiteEstimator(n_terms=n_terms)
    est.observe_many(data)
    return est.snapshot()


class TestSettings:
    def test_defaults(self):
        s = RootFinderSettings()
        assert (s.tolerance, s.max_newton_iters, s.bracket, s.grid_points) == (1e-9, 50, (-12.0, 12.0), 64)

    def test_validation(self):
        with pytest.raises(ValueError):
            RootFinderSettings(tolerance=0.0)
        with pytest.raises(ValueError):
            RootFinderSettings(bracket=(1.0, 1.0))


class TestInvertExamples:
    def test_median(self):
        r = invert_cdf(normal_snapshot(), 0.5)
        assert r.converged and abs(r.value) < 1e-12

    def test_phi_one(self):
        assert invert_cdf(normal_snapshot(), 0.8413447461).value == pytest.approx(1.0, abs=1e-6)

    def test_p99(self):
        assert invert_cdf(normal_snapshot(), 0.99).value == pytest.approx(NORMAL.inv_cdf(0.99), abs=1e-4)
        assert invert_cdf(normal_snapshot(), 0.99).value == pytest.approx(2.3263, abs=1e-4)

    @pytest.mark.parametrize("variant", ["full_line", "alternative"])
    def test_normal_grid(self, variant):
        snap = normal_snapshot(variant=variant)
        for p in PS:
            assert invert_cdf(snap, p).value == pytest.approx(NORMAL.inv_cdf(p), abs=1e-6)

    def test_original_units(self):
        a = np.zeros(7)
        a[0] = 1.0
        snap = DistributionSnapshot.from_coefficients(a, mu=10.0, sigma=3.0)
        assert invert_cdf(snap, 0.9).value == pytest.approx(10 + 3 * NORMAL.inv_cdf(0.9), abs=1e-6)

    def test_warm_start_same_answer(self):
        snap = fitted_snapshot(0)
        cold = invert_cdf(snap, 0.7)
        warm = invert_cdf(snap, 0.7, x0=cold.value + 0.3)
        assert warm.value == pytest.approx(cold.value, abs=1e-7)

    def test_no_sign_change_is_not_converged(self):
        # all-zero coefficients: alternative CDF is one for x >= 0 and zero below
        snap = DistributionSnapshot.from_coefficients(np.zeros(5), EstimatorConfig(n_terms=4, cdf_variant="full_line"))
        r = invert_cdf(snap, 0.5)
        assert not r.converged and r.value is None

    def test_p_out_of_range(self):
        with pytest.raises(ValueError):
            invert_cdf(normal_snapshot(), 1.0)


class TestJump:
    def test_downward_step(self):
        # mass 1.2: the alternative CDF steps from 0.6 down to 0.4 at zero and never equals 0.5
        a = np.zeros(7)
        a[0] = 1.2
        snap = DistributionSnapshot.from_coefficients(a, EstimatorConfig(n_terms=6), mu=2.0, sigma=1.5)
        left, right = cdf(a, -1e-300), cdf(a, 0.0)
        assert left == pytest.approx(0.6) and right == pytest.approx(0.4)
        # 0.5 is attained once on each side of zero; Newton may settle on either
        r = invert_cdf(snap, 0.5)
        assert r.converged and not r.at_discontinuity
        z = (r.value - 2.0) / 1.5
        assert abs(cdf(a, z) - 0.5) <= 1e-9
        # the grid fallback alone picks the leftmost crossing
        zl, ok, _ = solve_standardized(a, 0.5, settings=RootFinderSettings(max_newton_iters=0))
        assert ok and zl < 0 and abs(cdf(a, zl) - 0.5) <= 1e-9

    def test_upward_jump(self):
        a = np.zeros(7)
        a[0] = 0.9
        left, right = cdf(a, -1e-300), cdf(a, 0.0)
        assert left == pytest.approx(0.45) and right == pytest.approx(0.55)
        snap = DistributionSnapshot.from_coefficients(a, mu=1.0, sigma=2.0)
        r = invert_cdf(snap, 0.5)
        assert r.converged and r.at_discontinuity
        assert r.value == 1.0
        # infimum property: below the point F < p, at the point F >= p
        assert snap.cdf_at(1.0 - 1e-9) < 0.5 <= snap.cdf_at(1.0)

    def test_batch_solver_agrees_at_jump(self):
        a = np.zeros((3, 7))
        a[:, 0] = [0.9, 1.0, 0.95]
        z, ok = solve_standardized_batch(a, 0.5)
        assert ok.all()
        assert np.allclose(z, 0.0, atol=1e-9)


class TestProperties:
    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from(["normal", "chi2", "exp"]))
    def test_round_trip(self, seed, kind):
        snap = fitted_snapshot(seed, n=200 + seed % 300, kind=kind)
        tol = snap.config.root_finder.tolerance
        for p in PS:
            r = snap.quantile(p)
            if r.converged and not r.at_discontinuity:
                assert abs(snap.cdf_at(r.value) - p) <= tol
            elif r.converged:
                z = r.standardized
                assert cdf(snap.a_hat, np.nextafter(z, -np.inf)) < p <= cdf(snap.a_hat, z) + tol

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000))
    def test_monotone_in_p(self, seed):
        snap = fitted_snapshot(seed, kind="normal")
        grid = np.linspace(*snap.config.root_finder.bracket, 2001) * snap.sigma + snap.mu
        if not np.all(np.diff(snap.cdf_at(grid, clamp=True)) > 0):
            return
        values = [snap.quantile(p).value for p in PS]
        assert all(v is not None for v in values)
        assert all(a <= b for a, b in zip(values, values[1:]))

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([0.1, 0.25, 0.5, 0.75, 0.9]))
    def test_membership_coherence(self, seed, p):
        snap = fitted_snapshot(seed)
        r = snap.quantile(p)
        if not r.converged or r.at_discontinuity:
            return
        dens = snap.pdf_at(r.value)
        if dens <= 0.01:
            return
        eps = 10 * snap.config.root_finder.tolerance / dens
        assert not is_below_quantile(snap, r.value + eps, p)
        assert is_below_quantile(snap, r.value - eps, p)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(5)
        snaps = [fitted_snapshot(s) for s in range(8)]
        a = np.array([s.a_hat for s in snaps])
        for p in (0.1, 0.5, 0.93):
            z, ok = solve_standardized_batch(a, p)
            for i, s in enumerate(snaps):
                zi, oki, _ = solve_standardized(s.a_hat, p)
                assert ok[i] == oki
                assert z[i] == pytest.approx(zi, abs=1e-7)


class TestRefine:
    def test_examples(self):
        snap = normal_snapshot()
        ok = refine(invert_cdf(snap, 0.5), snap, 0.5, -1.0, 1.0, 0.1)
        assert not ok.refined_rejected and ok.value == pytest.approx(0.0, abs=1e-12)
        rej = refine(invert_cdf(snap, 0.5), snap, 0.5, -1.0, 1.0, 0.5)
        assert rej.refined_rejected and rej.value is None
        out = refine(invert_cdf(snap, 0.99), snap, 0.99, -1.0, 1.0, 0.1)
        assert out.refined_rejected and out.value is None

    def test_value_iff_converged_and_accepted(self):
        snap = normal_snapshot()
        for p in (0.2, 0.5, 0.95):
            for d in (0.05, 0.3):
                r = snap.refined_quantile(p, -1.5, 1.5, d)
                assert (r.value is not None) == (r.converged and not r.refined_rejected)

    def test_bad_arguments(self):
        snap = normal_snapshot()
        r = invert_cdf(snap, 0.5)
        with pytest.raises(ValueError):
            refine(r, snap, 0.5, 1.0, -1.0, 0.1)
        with pytest.raises(ValueError):
            refine(r, snap, 0.5, -1.0, 1.0, 0.0)

    def test_unconverged_input_rejected(self):
        snap = normal_snapshot()
        r = refine(QuantileResult(None, False), snap, 0.5, -1, 1, 0.1)
        assert r.refined_rejected and r.value is None


class TestMembership:
    def test_examples(self):
        snap = normal_snapshot()
        assert is_below_quantile(snap, 0.0, 0.9)
        assert not is_below_quantile(snap, 0.0, 0.5)
        assert not is_below_quantile(snap, 3.0, 0.5)
