"""Gauss-Hermite coefficient estimates and their online updates.

The estimate of coefficient k is an average of the per-observation terms
alpha_k Z(x) H_k(x). The static estimator keeps a running mean of those
terms; the EWGH estimator keeps an exponentially weighted moving average.

The step functions :func:`running_mean_step` and :func:`ewma_step` accept
arrays with any leading batch shape, so the simulation harness can advance
many independent streams at once with the same arithmetic as
:class:`CoefficientVector`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .special_functions import DomainError, hermite_all, hermite_scalar, normal_pdf

MODES = ("static", "ewgh")


@lru_cache(maxsize=None)
def _alphas(n_terms: int) -> tuple[float, ...]:
    k = np.arange(n_terms + 1)
    # alpha_k = sqrt(pi) / (2^(k-1) k!), in logs so large k cannot overflow
    log_alpha = 0.5 * math.log(math.pi) - (k - 1) * math.log(2.0) - special.gammaln(k + 1)
    return tuple(np.exp(log_alpha).tolist())


def alphas(n_terms: int) -> np.ndarray:
    """The constants alpha_0..alpha_N."""
    return np.array(_alphas(n_terms))


def term(x, n_terms: int) -> np.ndarray:
    """Single-observation summands alpha_k Z(x) H_k(x) for k = 0..n_terms.

    Vectorised over ``x``; the coefficient index is the trailing axis.
    """
    if isinstance(x, float) or np.ndim(x) == 0:
        x = float(x)
        z = normal_pdf(x)
        return np.array([a * z * h for a, h in zip(_alphas(n_terms), hermite_scalar(x, n_terms))])
    x = np.asarray(x, dtype=float)
    h = hermite_all(x, n_terms)
    return np.array(_alphas(n_terms)) * h * np.asarray(normal_pdf(x))[..., None]


def running_mean_step(a_hat: np.ndarray, count: int, t: np.ndarray) -> np.ndarray:
    """Fold term ``t`` into a running mean that will then cover ``count`` terms."""
    if count == 1:
        return np.array(t, dtype=float, copy=True)
    return ((count - 1) * a_hat + t) / count


def ewma_step(a_hat: np.ndarray, t: np.ndarray, lam: float) -> np.ndarray:
    return lam * t + (1.0 - lam) * a_hat


@dataclass
class CoefficientVector:
    """Estimated coefficients a_hat_0..a_hat_N and the state needed to update them.

    ``lam`` is only meaningful for ``mode == "ewgh"``.
    """

    n_terms: int
    mode: str = "static"
    lam: float | None = None
    count: int = 0
    a_hat: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_terms < 0:
            raise ValueError("n_terms must be non-negative")
        if self.mode == "ewgh":
            if self.lam is None or not (0.0 < self.lam <= 1.0):
                raise ValueError(f"ewgh mode needs 0 < lambda <= 1, got {self.lam}")
        else:
            self.lam = None
        if self.a_hat is None:
            self.a_hat = np.zeros(self.n_terms + 1)
        else:
            self.a_hat = np.array(self.a_hat, dtype=float)
            if self.a_hat.shape != (self.n_terms + 1,):
                raise ValueError("a_hat must have n_terms + 1 entries")

    def update(self, x: float) -> "CoefficientVector":
        """Absorb one observation in place and return ``self``."""
        if self.mode == "static":
            return update_static(self, x)
        return update_ewgh(self, x)

    def copy(self) -> "CoefficientVector":
        return CoefficientVector(self.n_terms, self.mode, self.lam, self.count, self.a_hat.copy())

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "lambda": self.lam,
            "count": self.count,
            "a_hat": [float(v) for v in self.a_hat],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientVector":
        a_hat = d["a_hat"]
        return cls(len(a_hat) - 1, d["mode"], d.get("lambda"), int(d["count"]), a_hat)


def _validated(x) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"non-finite observation: {x!r}")
    return x


def update_static(cv: CoefficientVector, x: float) -> CoefficientVector:
    """Running-average update; after n calls a_hat is the mean of the n terms."""
    if cv.mode != "static":
        raise ValueError("update_static called on a non-static coefficient vector")
    t = term(_validated(x), cv.n_terms)
    cv.a_hat = running_mean_step(cv.a_hat, cv.count + 1, t)
    cv.count += 1
    return cv


def update_ewgh(cv: CoefficientVector, x: float) -> CoefficientVector:
    """Exponentially weighted update; the first observation seeds a_hat directly."""
    if cv.mode != "ewgh":
        raise ValueError("update_ewgh called on a non-ewgh coefficient vector")
    t = term(_validated(x), cv.n_terms)
    if cv.count == 0:
        cv.a_hat = t
    else:
        cv.a_hat = ewma_step(cv.a_hat, t, cv.lam)
    cv.count += 1
    return cv


def fit_batch(data, n_terms: int) -> CoefficientVector:
    """Static coefficient estimate from a whole sample at once."""
    data = np.asarray(data, dtype=float).ravel()
    if data.size == 0:
        raise ValueError("fit_batch needs at least one observation")
    if not np.all(np.isfinite(data)):
        raise DomainError("non-finite observation in data")
    a_hat = term(data, n_terms).mean(axis=0)
    return CoefficientVector(n_terms, "static", None, int(data.size), a_hat)
