"""Streaming Gauss-Hermite quantile estimator.

Each observation first updates the location/scale estimates, is then
standardised with those fresh estimates, and finally folded into the
coefficient vector. Queries go through an immutable
:class:`DistributionSnapshot`, which maps between original and standardised
units using the moments current at the time the snapshot was taken.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .coefficients import MODES, CoefficientVector
from .density import CdfCoefficientTable, CdfVariant, cdf, cdf_table, pdf
from .quantile import QuantileResult, RootFinderSettings, invert_cdf, is_below_quantile, refine
from .special_functions import DomainError
from .standardize import ExpMoments, RunningMoments

MAX_TERMS = 32


@dataclass(frozen=True)
class EstimatorConfig:
    n_terms: int = 6
    mode: str = "static"
    lam: float = 0.05
    standardize: bool = True
    cdf_variant: CdfVariant = CdfVariant.ALTERNATIVE
    root_finder: RootFinderSettings = field(default_factory=RootFinderSettings)

    def __post_init__(self):
        if not 1 <= int(self.n_terms) <= MAX_TERMS:
            raise ValueError(f"n_terms must lie in [1, {MAX_TERMS}], got {self.n_terms}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        object.__setattr__(self, "cdf_variant", CdfVariant(self.cdf_variant))

    def to_dict(self) -> dict:
        rf = self.root_finder
        return {
            "n_terms": self.n_terms,
            "mode": self.mode,
            "lambda": self.lam,
            "standardize": self.standardize,
            "cdf_variant": self.cdf_variant.value,
            "tolerance": rf.tolerance,
            "max_newton_iters": rf.max_newton_iters,
            "bracket_low": rf.bracket[0],
            "bracket_high": rf.bracket[1],
            "grid_points": rf.grid_points,
            "refine_grid_points": rf.refine_grid_points,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorConfig":
        """Build a config from a flat key/value mapping; missing keys take defaults."""
        rf_defaults = RootFinderSettings()
        rf = RootFinderSettings(
            tolerance=float(d.get("tolerance", rf_defaults.tolerance)),
            max_newton_iters=int(d.get("max_newton_iters", rf_defaults.max_newton_iters)),
            bracket=(
                float(d.get("bracket_low", rf_defaults.bracket[0])),
                float(d.get("bracket_high", rf_defaults.bracket[1])),
            ),
            grid_points=int(d.get("grid_points", rf_defaults.grid_points)),
            refine_grid_points=int(d.get("refine_grid_points", rf_defaults.refine_grid_points)),
        )
        known = {f.name for f in fields(cls)} | {"lambda"}
        unknown = set(d) - known - set(RootFinderSettings.__dataclass_fields__) - {"bracket_low", "bracket_high"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(
            n_terms=int(d.get("n_terms", 6)),
            mode=d.get("mode", "static"),
            lam=float(d.get("lambda", d.get("lam", 0.05))),
            standardize=_as_bool(d.get("standardize", True)),
            cdf_variant=CdfVariant(d.get("cdf_variant", CdfVariant.ALTERNATIVE.value)),
            root_finder=rf,
        )


def _as_bool(v) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "yes", "on")
    return bool(v)


@dataclass(frozen=True, eq=False)
class DistributionSnapshot:
    """Frozen plug-in state: coefficients, location/scale and CDF constants."""

    a_hat: np.ndarray
    count: int
    mu: float
    sigma: float
    config: EstimatorConfig
    table: CdfCoefficientTable

    def __post_init__(self):
        a = np.array(self.a_hat, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "a_hat", a)

    @property
    def coefficients(self) -> CoefficientVector:
        lam = self.config.lam if self.config.mode == "ewgh" else None
        return CoefficientVector(self.config.n_terms, self.config.mode, lam, self.count, self.a_hat.copy())

    def _z(self, x):
        return (np.asarray(x, dtype=float) - self.mu) / self.sigma

    def pdf_at(self, x):
        """Density estimate in original units."""
        out = pdf(self.a_hat, self._z(x)) / self.sigma
        return float(out) if np.ndim(out) == 0 else out

    def cdf_at(self, x, clamp: bool = False):
        """CDF estimate in original units; raw unless ``clamp`` is set."""
        out = cdf(self.a_hat, self._z(x), self.config.cdf_variant, self.table)
        if clamp:
            out = np.clip(out, 0.0, 1.0)
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, p: float, x0: float | None = None) -> QuantileResult:
        return invert_cdf(self, p, x0=x0)

    def refined_quantile(self, p: float, x_min: float, x_max: float, d: float) -> QuantileResult:
        return refine(self.quantile(p), self, p, x_min, x_max, d)

    def is_below_quantile(self, x: float, p: float) -> bool:
        return is_below_quantile(self, x, p)

    def to_dict(self) -> dict:
        coeffs = self.coefficients.to_dict()
        return {
            **coeffs,
            "moments": {"mu": self.mu, "sigma": self.sigma, "count": self.count},
            "config": self.config.to_dict(),
        }

    def to_json(self) -> str:
        # float repr is the shortest string that round-trips, so this is bit-exact
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DistributionSnapshot":
        config = EstimatorConfig.from_dict(d["config"])
        moments = d["moments"]
        return cls(
            np.array(d["a_hat"], dtype=float),
            int(d["count"]),
            float(moments["mu"]),
            float(moments["sigma"]),
            config,
            cdf_table(config.n_terms),
        )

    @classmethod
    def from_json(cls, text: str) -> "DistributionSnapshot":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_coefficients(cls, a_hat, config: EstimatorConfig | None = None, mu: float = 0.0,
                          sigma: float = 1.0, count: int = 1) -> "DistributionSnapshot":
        """Snapshot around a given coefficient vector, e.g. an exact expansion."""
        a_hat = np.asarray(a_hat, dtype=float)
        config = config or EstimatorConfig(n_terms=a_hat.size - 1)
        if config.n_terms != a_hat.size - 1:
            config = replace(config, n_terms=a_hat.size - 1)
        return cls(a_hat, count, float(mu), float(sigma), config, cdf_table(config.n_terms))


class GaussHermiteEstimator:
    """One-pass CDF and quantile estimator for a single stream.

    >>> est = GaussHermiteEstimator(EstimatorConfig(n_terms=6))
    >>> est.observe_many([0.3, -1.2, 0.8, 2.1])
    >>> est.count
    4
    """

    def __init__(self, config: EstimatorConfig | None = None, **kwargs):
        if config is None:
            config = EstimatorConfig(**kwargs)
        elif kwargs:
            config = replace(config, **kwargs)
        self.config = config
        lam = config.lam if config.mode == "ewgh" else None
        self.coefficients = CoefficientVector(config.n_terms, config.mode, lam)
        self.moments = ExpMoments(config.lam) if config.mode == "ewgh" else RunningMoments()
        self._table = cdf_table(config.n_terms)
        self._warm: dict[float, float] = {}

    @property
    def count(self) -> int:
        return self.coefficients.count

    def location_scale(self) -> tuple[float, float]:
        if not self.config.standardize:
            return 0.0, 1.0
        return self.moments.location_scale()

    def observe(self, x: float) -> None:
        x = float(x)
        if not math.isfinite(x):
            raise DomainError(f"non-finite observation: {x!r}")
        if self.config.standardize:
            self.moments.update(x)
            mu, sigma = self.moments.location_scale()
            x = (x - mu) / sigma
        self.coefficients.update(x)

    def observe_many(self, xs) -> None:
        for x in xs:
            self.observe(x)

    def snapshot(self) -> DistributionSnapshot:
        if self.count == 0:
            raise ValueError("no observations yet")
        mu, sigma = self.location_scale()
        return DistributionSnapshot(self.coefficients.a_hat, self.count, mu, sigma, self.config, self._table)

    def quantile(self, p: float) -> QuantileResult:
        """Quantile of the current state, warm-started from the last answer for ``p``."""
        result = self.snapshot().quantile(p, x0=self._warm.get(p))
        if result.converged:
            self._warm[p] = result.value
        return result

    def cdf_at(self, x: float, clamp: bool = False) -> float:
        return self.snapshot().cdf_at(x, clamp)

    def pdf_at(self, x: float) -> float:
        return self.snapshot().pdf_at(x)


def quantile(snapshot: DistributionSnapshot, p: float) -> QuantileResult:
    return snapshot.quantile(p)


def cdf_at(snapshot: DistributionSnapshot, x: float) -> float:
    return snapshot.cdf_at(x)


def pdf_at(snapshot: DistributionSnapshot, x: float) -> float:
    return snapshot.pdf_at(x)


def effective_window(lam: float) -> int:
    """Number of recent observations carrying 99.9% of the EWGH weight."""
    if not 0.0 < lam < 1.0:
        raise DomainError(f"effective window needs 0 < lambda < 1, got {lam}")
    return int(round(math.log(0.001) / math.log1p(-lam)))
