"""Simulation harness: stream models, RMSE curves and the coverage test.

``run_experiment`` advances all runs of an experiment together, one
observation per step, using the same update arithmetic as
:class:`~hermite_quantiles.estimator.GaussHermiteEstimator`. Each run draws
its stream from its own generator seeded with ``seed + run``, so results do
not depend on how runs are batched.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .coefficients import ewma_step, running_mean_step, term
from .estimator import EstimatorConfig, GaussHermiteEstimator, effective_window
from .quantile import solve_standardized_batch
from .standardize import SIGMA_FLOOR, ewma_moments_step, welford_step

KINDS = ("chi_squared_5", "exponential_unit", "normal_drift", "exponential_drift", "change_point", "pareto")
DRIFT_RATE = 0.006
BOOTSTRAP_SEED_OFFSET = 1_000_000_007


@dataclass(frozen=True)
class StreamModel:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        defaults = {
            "normal_drift": {"rate": DRIFT_RATE},
            "exponential_drift": {"rate": DRIFT_RATE},
            "change_point": {"s": 500, "mu1": 0.0, "sigma1": 1.0, "mu2": 5.0, "sigma2": 1.0},
            "pareto": {"alpha": 3.5, "x_min": 1.0},
        }.get(self.kind, {})
        merged = {**defaults, **self.params}
        if self.kind == "pareto" and merged["alpha"] <= 1.0:
            raise ValueError("pareto needs alpha > 1")
        object.__setattr__(self, "params", merged)

    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray:
        """Draws for updates j = 1..m."""
        j = np.arange(1, m + 1)
        p = self.params
        if self.kind == "chi_squared_5":
            return rng.chisquare(5, m)
        if self.kind == "exponential_unit":
            return rng.exponential(1.0, m)
        if self.kind == "normal_drift":
            return rng.normal(p["rate"] * j, 1.0)
        if self.kind == "exponential_drift":
            return rng.exponential(1.0 + p["rate"] * j)
        if self.kind == "change_point":
            first = j <= p["s"] + 1
            return np.where(first, rng.normal(p["mu1"], p["sigma1"], m), rng.normal(p["mu2"], p["sigma2"], m))
        # density (alpha - 1)/x_min (x/x_min)^-alpha is a Lomax shifted by one, shape alpha - 1
        return (rng.pareto(p["alpha"] - 1.0, m) + 1.0) * p["x_min"]

    def moments(self, j: int = 1) -> tuple[float, float]:
        """Analytic (mean, variance) of the draw at update ``j``."""
        p = self.params
        if self.kind == "chi_squared_5":
            return 5.0, 10.0
        if self.kind == "exponential_unit":
            return 1.0, 1.0
        if self.kind == "normal_drift":
            return p["rate"] * j, 1.0
        if self.kind == "exponential_drift":
            scale = 1.0 + p["rate"] * j
            return scale, scale * scale
        if self.kind == "change_point":
            if j <= p["s"] + 1:
                return p["mu1"], p["sigma1"] ** 2
            return p["mu2"], p["sigma2"] ** 2
        b, xm = p["alpha"] - 1.0, p["x_min"]
        mean = b * xm / (b - 1.0) if b > 1.0 else math.inf
        var = b * xm * xm / ((b - 1.0) ** 2 * (b - 2.0)) if b > 2.0 else math.inf
        return mean, var


def true_quantile(model: StreamModel, j: int, p: float) -> float:
    """Exact p-quantile of the draw at update ``j``."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    prm = model.params
    if model.kind == "chi_squared_5":
        return float(special.chdtri(5, 1.0 - p))
    if model.kind == "exponential_unit":
        return -math.log1p(-p)
    if model.kind == "normal_drift":
        return prm["rate"] * j + float(special.ndtri(p))
    if model.kind == "exponential_drift":
        return -(1.0 + prm["rate"] * j) * math.log1p(-p)
    if model.kind == "change_point":
        if j <= prm["s"] + 1:
            return prm["mu1"] + prm["sigma1"] * float(special.ndtri(p))
        return prm["mu2"] + prm["sigma2"] * float(special.ndtri(p))
    if model.kind == "pareto":
        return prm["x_min"] * (1.0 - p) ** (-1.0 / (prm["alpha"] - 1.0))
    raise ValueError(f"unsupported model kind {model.kind!r}")


@dataclass(frozen=True)
class ExperimentSpec:
    model: StreamModel
    config: EstimatorConfig = field(default_factory=EstimatorConfig)
    quantiles: tuple[float, ...] = (0.5, 0.9, 0.99)
    observations: int = 4000
    runs: int = 1000
    bootstrap_resamples: int = 1000
    seed: int = 0
    stride: int = 1
    checkpoints: tuple[int, ...] | None = None
    method: str = "gh"
    window: int | None = None

    def __post_init__(self):
        if self.runs < 2:
            raise ValueError("an experiment needs at least two runs")
        if not all(0.0 < p < 1.0 for p in self.quantiles):
            raise ValueError("quantiles must lie in (0, 1)")
        if self.observations < 1 or self.stride < 1:
            raise ValueError("observations and stride must be positive")
        if self.method not in ("gh", "window"):
            raise ValueError("method must be 'gh' or 'window'")

    def steps(self) -> np.ndarray:
        """Update indices j (1-based) at which estimates are recorded."""
        if self.checkpoints is not None:
            steps = sorted({int(j) for j in self.checkpoints if 1 <= j <= self.observations})
            return np.array(steps, dtype=int)
        steps = list(range(self.stride, self.observations + 1, self.stride))
        if not steps or steps[-1] != self.observations:
            steps.append(self.observations)
        return np.array(steps, dtype=int)


@dataclass
class RmseCurve:
    p: float
    steps: np.ndarray
    rmse: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    mean_estimate: np.ndarray
    truth: np.ndarray
    failures: np.ndarray

    def at(self, j: int) -> float:
        return float(self.rmse[np.searchsorted(self.steps, j)])


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    curves: dict[float, RmseCurve]
    estimates: dict[float, np.ndarray]
    elapsed: float

    def summary(self) -> dict:
        return {
            "model": {"kind": self.spec.model.kind, "params": self.spec.model.params},
            "config": self.spec.config.to_dict(),
            "method": self.spec.method,
            "window": self.spec.window,
            "runs": self.spec.runs,
            "observations": self.spec.observations,
            "bootstrap_resamples": self.spec.bootstrap_resamples,
            "seed": self.spec.seed,
            "quantiles": list(self.spec.quantiles),
            "final": {
                str(p): {
                    "j": int(c.steps[-1]),
                    "rmse": float(c.rmse[-1]),
                    "ci_low": float(c.ci_low[-1]),
                    "ci_high": float(c.ci_high[-1]),
                    "mean_estimate": float(c.mean_estimate[-1]),
                    "truth": float(c.truth[-1]),
                }
                for p, c in self.curves.items()
            },
            "failures": int(sum(int(c.failures.sum()) for c in self.curves.values())),
            "elapsed_seconds": self.elapsed,
        }


def generate_streams(model: StreamModel, m: int, runs: int, seed: int) -> np.ndarray:
    """One row per run; run r uses ``default_rng(seed + r)``."""
    return np.stack([model.sample(np.random.default_rng(seed + r), m) for r in range(runs)])


def gh_estimates(streams: np.ndarray, config: EstimatorConfig, quantiles, steps) -> dict[float, np.ndarray]:
    """Quantile estimates of every run at the given steps; NaN marks a failed inversion."""
    runs, m = streams.shape
    steps = np.asarray(steps, dtype=int)
    record = np.zeros(m + 1, dtype=bool)
    record[steps] = True
    col = {int(j): i for i, j in enumerate(steps)}
    out = {p: np.full((runs, steps.size), np.nan) for p in quantiles}
    warm = {p: None for p in quantiles}
    n = config.n_terms
    lam = config.lam
    ewgh = config.mode == "ewgh"

    a = np.zeros((runs, n + 1))
    mu = np.zeros(runs)
    s_or_v = np.zeros(runs)
    sigma = np.ones(runs)
    for j in range(1, m + 1):
        x = streams[:, j - 1]
        if config.standardize:
            if j == 1:
                mu = x.copy()
                shift = x.copy()
                dm = np.zeros(runs)
                s_or_v = np.ones(runs) if ewgh else np.zeros(runs)
            elif ewgh:
                mu, s_or_v = ewma_moments_step(lam, mu, s_or_v, x)
            else:
                dm, s_or_v = welford_step(j, dm, s_or_v, x - shift)
                mu = shift + dm
            if ewgh:
                sigma = np.maximum(np.sqrt(s_or_v), SIGMA_FLOOR)
            elif j >= 2:
                sigma = np.maximum(np.sqrt(s_or_v / (j - 1)), SIGMA_FLOOR)
            z = (x - mu) / sigma
        else:
            z = x
        t = term(z, n)
        if j == 1:
            a = t
        elif ewgh:
            a = ewma_step(a, t, lam)
        else:
            a = running_mean_step(a, j, t)
        if record[j]:
            loc = mu if config.standardize else np.zeros(runs)
            scale = sigma if config.standardize else np.ones(runs)
            for p in quantiles:
                zq, ok = solve_standardized_batch(a, p, config.cdf_variant, config.root_finder, warm[p])
                warm[p] = np.where(ok, zq, 0.0)
                out[p][:, col[j]] = np.where(ok, loc + scale * zq, np.nan)
    return out


def window_estimates(streams: np.ndarray, window: int, quantiles, steps) -> dict[float, np.ndarray]:
    """Sliding-window empirical quantiles (order statistic x_(ceil(n p)) of the last ``window`` values)."""
    runs, _ = streams.shape
    out = {p: np.empty((runs, len(steps))) for p in quantiles}
    for c, j in enumerate(steps):
        block = np.sort(streams[:, max(0, j - window):j], axis=1)
        n = block.shape[1]
        for p in quantiles:
            i = max(1, math.ceil(round(n * p, 9)))
            out[p][:, c] = block[:, i - 1]
    return out


def rmse_with_bootstrap(estimates: np.ndarray, truth: np.ndarray, resamples: int, rng: np.random.Generator):
    """RMSE over runs at each step and 95% percentile bootstrap intervals.

    Runs are the resampling unit; one index matrix is shared by every step so
    each bootstrap replicate is a coherent set of whole runs. Failed runs
    (NaN) are left out of every mean they would enter.
    """
    sq = (estimates - truth[None, :]) ** 2
    runs, nsteps = sq.shape
    valid = np.isfinite(sq)
    with np.errstate(invalid="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rmse = np.sqrt(np.nanmean(np.where(valid, sq, np.nan), axis=0)) if valid.any() else np.full(nsteps, np.nan)
    lo = np.full(nsteps, np.nan)
    hi = np.full(nsteps, np.nan)
    if resamples > 0:
        idx = rng.integers(0, runs, size=(resamples, runs))
        # each resample is a multiplicity per run, so sums over it are a matrix product
        weights = np.zeros((resamples, runs))
        np.add.at(weights, (np.arange(resamples)[:, None], idx), 1.0)
        num = weights @ np.where(valid, sq, 0.0)
        den = weights @ valid.astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            boot = np.sqrt(num / den)
        quantile = np.nanquantile if np.isnan(boot).any() else np.quantile
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            lo, hi = quantile(boot, [0.025, 0.975], axis=0)
    return rmse, lo, hi


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    start = time.perf_counter()
    steps = spec.steps()
    streams = generate_streams(spec.model, spec.observations, spec.runs, spec.seed)
    if spec.method == "window":
        window = spec.window or effective_window(spec.config.lam)
        estimates = window_estimates(streams, window, spec.quantiles, steps)
    else:
        estimates = gh_estimates(streams, spec.config, spec.quantiles, steps)
    curves = {}
    for i, p in enumerate(spec.quantiles):
        truth = np.array([true_quantile(spec.model, int(j), p) for j in steps])
        rng = np.random.default_rng(spec.seed + BOOTSTRAP_SEED_OFFSET + i)
        rmse, lo, hi = rmse_with_bootstrap(estimates[p], truth, spec.bootstrap_resamples, rng)
        est = estimates[p]
        with np.errstate(invalid="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mean_est = np.nanmean(est, axis=0) if np.isfinite(est).any() else np.full(steps.size, np.nan)
        curves[p] = RmseCurve(p, steps, rmse, lo, hi, mean_est, truth, (~np.isfinite(est)).sum(axis=0))
    return ExperimentResult(spec, curves, estimates, time.perf_counter() - start)


CSV_HEADER = ("p", "j", "rmse", "ci_low", "ci_high")


def write_rmse_csv(result: ExperimentResult, fh) -> None:
    """One row per (quantile, step); floats use repr so they read back exactly."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p, c in result.curves.items():
        for j, r, lo, hi in zip(c.steps, c.rmse, c.ci_low, c.ci_high):
            w.writerow([repr(float(p)), int(j), repr(float(r)), repr(float(lo)), repr(float(hi))])


def rmse_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    write_rmse_csv(result, buf)
    return buf.getvalue()


@dataclass
class CoverageReport:
    quantiles: tuple[float, ...]
    frequencies: dict[float, float]
    below: dict[float, int]
    evaluated: dict[float, int]
    warmup_excluded: int
    failures: dict[float, int]

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("frequencies", "below", "evaluated", "failures"):
            d[key] = {str(k): v for k, v in d[key].items()}
        return d


def coverage_test(stream, config: EstimatorConfig | None = None, quantiles=(0.5, 0.9, 0.99),
                  warmup: int = 2) -> CoverageReport:
    """Out-of-sample frequency of x_{i+1} falling below the estimate built from x_1..x_i.

    Steps before ``warmup`` observations have been absorbed are excluded, as
    are steps where the quantile inversion fails.
    """
    config = config or EstimatorConfig()
    quantiles = tuple(quantiles)
    est = GaussHermiteEstimator(config)
    below = {p: 0 for p in quantiles}
    evaluated = {p: 0 for p in quantiles}
    failures = {p: 0 for p in quantiles}
    excluded = 0
    n = 0
    for x in stream:
        x = float(x)
        n += 1
        if est.count >= max(warmup, 1):
            for p in quantiles:
                q = est.quantile(p)
                if not q.converged:
                    failures[p] += 1
                    continue
                evaluated[p] += 1
                if x < q.value:
                    below[p] += 1
        else:
            excluded += 1
        est.observe(x)
    if n < 1:
        raise ValueError("coverage test needs a non-empty stream")
    freqs = {p: (below[p] / evaluated[p] if evaluated[p] else math.nan) for p in quantiles}
    return CoverageReport(quantiles, freqs, below, evaluated, excluded, failures)


def coverage_for_model(model: StreamModel, m: int, config: EstimatorConfig | None = None,
                       quantiles=(0.5, 0.9, 0.99), seed: int = 0) -> CoverageReport:
    return coverage_test(model.sample(np.random.default_rng(seed), m), config, quantiles)


def summary_json(result: ExperimentResult) -> str:
    return json.dumps(result.summary(), indent=2, sort_keys=True)
