"""Non-streaming reference computations.

Nothing here reuses the online update path: empirical quantiles come from
sorted samples, true expansion coefficients and integrated errors from
adaptive quadrature, and the Monte Carlo checks compare streamed estimates
against those references. Reports are plain dicts with keys
``check, grid, lhs, rhs, stderr, pass`` so they serialise to JSON directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np
from scipy import integrate, special

from .coefficients import alphas, ewma_step, term
from .density import CdfVariant, cdf, cdf_table, pdf
from .special_functions import hermite_all, normal_pdf

QUAD_ABS_TOL = 1e-10
SE_MULTIPLIER = 3.0


class QuadratureError(RuntimeError):
    pass


def _quad(f, a, b, epsabs=QUAD_ABS_TOL, points=None):
    kwargs = {"epsabs": epsabs, "epsrel": 1e-10, "limit": 400}
    if points is not None and math.isfinite(a) and math.isfinite(b):
        kwargs["points"] = points
    val, err = integrate.quad(f, a, b, full_output=0, **kwargs)
    if not math.isfinite(val):
        raise QuadratureError(f"quadrature failed on [{a}, {b}]")
    return val, err


@dataclass(frozen=True)
class EmpiricalDistribution:
    sorted_values: np.ndarray

    @classmethod
    def from_values(cls, values) -> "EmpiricalDistribution":
        v = np.sort(np.asarray(values, dtype=float).ravel())
        if v.size == 0:
            raise ValueError("empirical distribution needs at least one value")
        return cls(v)

    def edf(self, x):
        """Fraction of values <= x."""
        out = np.searchsorted(self.sorted_values, x, side="right") / self.sorted_values.size
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, p: float) -> float:
        """Order statistic x_(i) with i = ceil(n p); p = 0 is rejected."""
        if not 0.0 < p <= 1.0:
            raise ValueError(f"p must lie in (0, 1], got {p}")
        n = self.sorted_values.size
        # guard against n*p landing a hair above an integer
        i = max(1, math.ceil(round(n * p, 9)))
        return float(self.sorted_values[i - 1])


def edf(values, x):
    return EmpiricalDistribution.from_values(values).edf(x)


def sample_quantile(values, p: float) -> float:
    return EmpiricalDistribution.from_values(values).quantile(p)


# ---------------------------------------------------------------- reference models

@dataclass(frozen=True)
class ReferenceDistribution:
    """A known distribution: density, CDF, sampler and mean.

    ``pdf`` and ``cdf`` accept floats or arrays and return zero / the
    boundary value outside ``support``.
    """

    name: str
    pdf: Callable
    cdf: Callable
    sampler: Callable
    mean: float
    support: tuple[float, float]

    def sample(self, rng, size):
        return self.sampler(rng, size)


def _exp_pdf(x, scale):
    if np.ndim(x) == 0:
        return math.exp(-x / scale) / scale if x >= 0.0 else 0.0
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0.0, np.exp(-np.maximum(x, 0.0) / scale) / scale, 0.0)


def _exp_cdf(x, scale):
    if np.ndim(x) == 0:
        return -math.expm1(-x / scale) if x > 0.0 else 0.0
    x = np.asarray(x, dtype=float)
    return np.where(x > 0.0, -np.expm1(-np.maximum(x, 0.0) / scale), 0.0)


def _chi2_pdf(x, df):
    log_norm = -(0.5 * df * math.log(2.0) + math.lgamma(0.5 * df))
    if np.ndim(x) == 0:
        if x <= 0.0:
            return 0.0
        return math.exp(log_norm + (0.5 * df - 1.0) * math.log(x) - 0.5 * x)
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0.0, x, 1.0)
    return np.where(x > 0.0, np.exp(log_norm + (0.5 * df - 1.0) * np.log(safe) - 0.5 * safe), 0.0)


def _chi2_cdf(x, df):
    out = special.gammainc(0.5 * df, np.maximum(np.asarray(x, dtype=float), 0.0) / 2.0)
    return float(out) if np.ndim(out) == 0 else out


def _normal_pdf(x, loc, scale):
    z = (float(x) - loc) / scale if np.ndim(x) == 0 else (np.asarray(x, dtype=float) - loc) / scale
    return normal_pdf(z) / scale


def _normal_cdf(x, loc, scale):
    out = special.ndtr((np.asarray(x, dtype=float) - loc) / scale)
    return float(out) if np.ndim(out) == 0 else out


def reference(name: str, **params) -> ReferenceDistribution:
    """Reference distributions used by the checks: ``exp``, ``chi2`` or ``normal``."""
    if name in ("exp", "exponential"):
        scale = float(params.get("scale", 1.0))
        return ReferenceDistribution(
            "exponential", partial(_exp_pdf, scale=scale), partial(_exp_cdf, scale=scale),
            lambda rng, size: rng.exponential(scale, size), scale, (0.0, math.inf))
    if name in ("chi2", "chi_squared"):
        df = float(params.get("df", 5))
        return ReferenceDistribution(
            f"chi2({df:g})", partial(_chi2_pdf, df=df), partial(_chi2_cdf, df=df),
            lambda rng, size: rng.chisquare(df, size), df, (0.0, math.inf))
    if name == "normal":
        loc, scale = float(params.get("loc", 0.0)), float(params.get("scale", 1.0))
        return ReferenceDistribution(
            f"normal({loc:g},{scale:g})", partial(_normal_pdf, loc=loc, scale=scale),
            partial(_normal_cdf, loc=loc, scale=scale),
            lambda rng, size: rng.normal(loc, scale, size), loc, (-math.inf, math.inf))
    raise ValueError(f"unknown reference distribution {name!r}")


def true_coefficients(density, n_terms: int, support=(-math.inf, math.inf)) -> np.ndarray:
    """a_k = alpha_k int Z(x) f(x) H_k(x) dx by adaptive quadrature."""
    alpha = alphas(n_terms)
    out = np.empty(n_terms + 1)
    lo, hi = support
    for k in range(n_terms + 1):
        def integrand(x, k=k):
            return normal_pdf(x) * density(x) * hermite_all(x, k)[-1]
        out[k] = alpha[k] * _piecewise_quad(integrand, lo, hi)
    return out


def term_variance(density, k: int, support=(-math.inf, math.inf)) -> float:
    """Variance of the single-observation term alpha_k Z(X) H_k(X) for X ~ density."""
    alpha = alphas(k)[k]

    def second(x):
        return (alpha * normal_pdf(x) * hermite_all(x, k)[-1]) ** 2 * density(x)

    def first(x):
        return alpha * normal_pdf(x) * hermite_all(x, k)[-1] * density(x)

    lo, hi = support
    m1 = _piecewise_quad(first, lo, hi)
    m2 = _piecewise_quad(second, lo, hi)
    return m2 - m1 * m1


def _piecewise_quad(f, lo, hi) -> float:
    # Hermite-weighted integrands live in |x| < ~40; split there to help quad
    cuts = [c for c in (-40.0, -8.0, 0.0, 8.0, 40.0) if lo < c < hi]
    edges = [lo, *cuts, hi]
    return math.fsum(_quad(f, a, b)[0] for a, b in zip(edges[:-1], edges[1:]))


def ise(snapshot, true_pdf, support=(-math.inf, math.inf)) -> float:
    """Integrated squared error of a snapshot's density against ``true_pdf``.

    ``true_pdf`` is taken to vanish outside ``support``; the estimate does not,
    so its mass outside the support counts too.
    """
    lo, hi = support
    inside = _piecewise_quad(lambda x: (snapshot.pdf_at(x) - true_pdf(x)) ** 2, lo, hi)
    outside = 0.0
    if math.isfinite(lo):
        outside += _piecewise_quad(lambda x: snapshot.pdf_at(x) ** 2, -math.inf, lo)
    if math.isfinite(hi):
        outside += _piecewise_quad(lambda x: snapshot.pdf_at(x) ** 2, hi, math.inf)
    return inside + outside


def _ise_raw(a_hat, true_pdf, support) -> float:
    lo, hi = support
    inside = _piecewise_quad(lambda x: (pdf(a_hat, x) - true_pdf(x)) ** 2, lo, hi)
    outside = 0.0
    if math.isfinite(lo):
        outside += _piecewise_quad(lambda x: pdf(a_hat, x) ** 2, -math.inf, lo)
    if math.isfinite(hi):
        outside += _piecewise_quad(lambda x: pdf(a_hat, x) ** 2, hi, math.inf)
    return inside + outside


# ---------------------------------------------------------------- Monte Carlo checks

def _static_fits(dist: ReferenceDistribution, n_terms: int, n: int, runs: int, seed: int) -> np.ndarray:
    """Unstandardised static coefficient estimates, one row per independent stream."""
    out = np.empty((runs, n_terms + 1))
    for r in range(runs):
        x = dist.sample(np.random.default_rng(seed + r), n)
        out[r] = term(x, n_terms).mean(axis=0)
    return out


def _report(check: str, grid, lhs, rhs, stderr, passed, **extra) -> dict:
    return {
        "check": check,
        "grid": [float(g) for g in grid],
        "lhs": [float(v) for v in lhs],
        "rhs": [float(v) for v in rhs],
        "stderr": [float(v) for v in stderr],
        "pass": bool(passed),
        **extra,
    }


def _insufficient(check: str, grid, runs: int) -> dict:
    nan = [math.nan] * len(grid)
    return _report(check, grid, nan, nan, nan, False, insufficient_samples=True, runs=runs)


def check_cdf_mse_bound(dist: ReferenceDistribution, n_terms: int = 6, n: int = 500,
                        x_grid=(0.5, 1.0, 2.0, 4.0), runs: int = 500, seed: int = 0) -> dict:
    """Monte Carlo check of E|F_hat(x) - F(x)|^2 <= x * MISE for positive data.

    Each run fits the static estimator to ``n`` raw (unstandardised) draws and
    uses the positive-support CDF. The two sides are paired per run, so the
    standard error is that of the per-run difference.
    """
    x_grid = [float(x) for x in x_grid]
    if runs < 2:
        return _insufficient("cdf-mse-bound", x_grid, runs)
    if dist.support[0] < 0.0:
        raise ValueError("bound applies to distributions supported on [0, inf)")
    fits = _static_fits(dist, n_terms, n, runs, seed)
    table = cdf_table(n_terms)
    ises = np.array([_ise_raw(a, dist.pdf, dist.support) for a in fits])
    xs = np.array(x_grid)
    f_hat = cdf(fits[:, None, :], xs[None, :], CdfVariant.POSITIVE_SUPPORT, table)
    sq_err = (f_hat - dist.cdf(xs)) ** 2
    diff = sq_err - xs * ises[:, None]
    lhs = sq_err.mean(axis=0)
    rhs = xs * ises.mean()
    se = diff.std(axis=0, ddof=1) / math.sqrt(runs)
    passed = bool(np.all(lhs <= rhs + SE_MULTIPLIER * se))
    return _report("cdf-mse-bound", x_grid, lhs, rhs, se, passed,
                   distribution=dist.name, n_terms=n_terms, n=n, runs=runs, mise=float(ises.mean()))


def check_omega_bound(dist: ReferenceDistribution, n_terms: int = 6, n: int = 500,
                      runs: int = 500, seed: int = 0) -> dict:
    """Monte Carlo check of E int (F_hat - F)^2 f dx <= MISE * mean."""
    if runs < 2:
        return _insufficient("omega-bound", [dist.mean], runs)
    fits = _static_fits(dist, n_terms, n, runs, seed)
    table = cdf_table(n_terms)
    ises = np.array([_ise_raw(a, dist.pdf, dist.support) for a in fits])
    omegas = np.empty(runs)
    for r, a in enumerate(fits):
        def integrand(x, a=a):
            return (cdf(a, x, CdfVariant.POSITIVE_SUPPORT, table) - dist.cdf(x)) ** 2 * dist.pdf(x)
        omegas[r] = _piecewise_quad(integrand, 0.0, math.inf)
    mu = dist.mean
    diff = omegas - mu * ises
    lhs, rhs = omegas.mean(), mu * ises.mean()
    se = diff.std(ddof=1) / math.sqrt(runs)
    passed = bool(lhs <= rhs + SE_MULTIPLIER * se)
    return _report("omega-bound", [mu], [lhs], [rhs], [se], passed,
                   distribution=dist.name, n_terms=n_terms, n=n, runs=runs, mise=float(ises.mean()))


def ewgh_variance_factor(lam: float, n: int) -> float:
    """Var(a_hat_k) / Var(term) for EWGH after n + 1 i.i.d. observations."""
    d = (1.0 - lam) ** (2 * n)
    return lam / (2.0 - lam) * (1.0 - d) + d


def ewgh_change_point_mse(lam: float, s: int, t: int, a1: float, a2: float, var1: float, var2: float) -> float:
    """Exact coefficient MSE against the post-change coefficient.

    Bias^2 + variance for s + 1 draws from the first distribution followed by
    t draws from the second.
    """
    r = lam / (2.0 - lam)
    q2t = (1.0 - lam) ** (2 * t)
    q2st = (1.0 - lam) ** (2 * (s + t))
    bias2 = q2t * (a1 - a2) ** 2
    var = var1 * (r * q2t + (1.0 - r) * q2st) + var2 * r * (1.0 - q2t)
    return bias2 + var


def _ewgh_streams(x: np.ndarray, lam: float, n_terms: int) -> np.ndarray:
    """Run EWGH over the columns of ``x`` (streams are rows)."""
    a = term(x[:, 0], n_terms)
    for j in range(1, x.shape[1]):
        a = ewma_step(a, term(x[:, j], n_terms), lam)
    return a


def check_ewgh_variance_identity(lam: float, n: int, ks=(0, 1, 2, 6), runs: int = 2000, seed: int = 0,
                                 dist: ReferenceDistribution | None = None) -> dict:
    """Monte Carlo Var(a_hat_k) against factor(lam, n) * Var(term_k), i.i.d. data.

    Each stream has n + 1 observations. Var(term_k) is itself estimated by
    Monte Carlo from an independent sample of single terms; the standard error
    combines the uncertainty of both variance estimates.
    """
    dist = dist or reference("normal")
    ks = list(ks)
    if runs < 2:
        return _insufficient("ewgh-variance-identity", ks, runs)
    n_terms = max(ks)
    rng = np.random.default_rng(seed)
    x = dist.sample(rng, (runs, n + 1))
    est = _ewgh_streams(x, lam, n_terms)
    single = term(dist.sample(np.random.default_rng(seed + 1_000_003), runs * 50), n_terms)
    factor = ewgh_variance_factor(lam, n)
    lhs, rhs, se, ok = [], [], [], []
    for k in ks:
        v_est, se_est = _variance_with_se(est[:, k])
        v_term, se_term = _variance_with_se(single[:, k])
        lhs.append(v_est)
        rhs.append(factor * v_term)
        s = math.hypot(se_est, factor * se_term)
        se.append(s)
        ok.append(abs(v_est - factor * v_term) <= SE_MULTIPLIER * s)
    return _report("ewgh-variance-identity", ks, lhs, rhs, se, all(ok),
                   lam=lam, n=n, runs=runs, distribution=dist.name)


def _variance_with_se(v: np.ndarray) -> tuple[float, float]:
    """Sample variance and its large-sample standard error sqrt((m4 - s^4)/R)."""
    d = v - v.mean()
    s2 = float(np.mean(d * d) * v.size / (v.size - 1))
    m4 = float(np.mean(d ** 4))
    return s2, math.sqrt(max(m4 - s2 * s2, 0.0) / v.size)


def check_ewgh_coefficient_mse(s: int, t, lam: float = 0.05, k: int = 1, runs: int = 2000, seed: int = 0,
                               first: ReferenceDistribution | None = None,
                               second: ReferenceDistribution | None = None) -> dict:
    """Monte Carlo coefficient MSE after a change point against the exact expression.

    ``t`` may be a single step count or a sequence; each entry is a grid point.
    True coefficients and term variances come from quadrature.
    """
    first = first or reference("normal", loc=0.0, scale=1.0)
    second = second or reference("normal", loc=1.0, scale=1.0)
    ts = [int(t)] if np.ndim(t) == 0 else [int(v) for v in t]
    if runs < 2:
        return _insufficient("ewgh-coefficient-mse", ts, runs)
    a1 = true_coefficients(first.pdf, k, first.support)[k]
    a2 = true_coefficients(second.pdf, k, second.support)[k]
    v1 = term_variance(first.pdf, k, first.support)
    v2 = term_variance(second.pdf, k, second.support)
    lhs, rhs, se, ok = [], [], [], []
    for i, tt in enumerate(ts):
        rng = np.random.default_rng(seed + 7919 * i)
        x = np.concatenate([first.sample(rng, (runs, s + 1)), second.sample(rng, (runs, tt))], axis=1)
        est = _ewgh_streams(x, lam, k)[:, k]
        sq = (est - a2) ** 2
        mc = float(sq.mean())
        err = float(sq.std(ddof=1) / math.sqrt(runs))
        exact = ewgh_change_point_mse(lam, s, tt, a1, a2, v1, v2)
        lhs.append(mc)
        rhs.append(exact)
        se.append(err)
        ok.append(abs(mc - exact) <= SE_MULTIPLIER * err)
    return _report("ewgh-coefficient-mse", ts, lhs, rhs, se, all(ok), s=s, lam=lam, k=k, runs=runs,
                   a1=float(a1), a2=float(a2), var1=float(v1), var2=float(v2),
                   first=first.name, second=second.name)
