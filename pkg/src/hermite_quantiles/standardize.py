"""Online location/scale estimates used to standardise a stream.

Static streams use Welford's running mean and sum of squared deviations;
dynamic streams use exponentially weighted mean and variance.

The Welford recursions run on x - x_1 rather than on x. For data clustered
far from zero (say 1e9 plus unit noise) the subtraction is exact, and the
running mean then carries rounding error on the scale of the spread rather
than on the scale of the offset.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .special_functions import DomainError

SIGMA_FLOOR = 1e-12


def _validated(x) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"non-finite observation: {x!r}")
    return x


def welford_step(count, m, s, x):
    """One Welford step. ``count`` is the count *after* absorbing ``x``.

    Works elementwise on numpy arrays as well as floats.
    """
    delta = x - m
    m_new = m + delta / count
    s_new = s + delta * (x - m_new)
    return m_new, s_new


def ewma_moments_step(lam, mu, v, x):
    mu_new = (1.0 - lam) * mu + lam * x
    v_new = (1.0 - lam) * v + lam * (x - mu_new) ** 2
    return mu_new, v_new


@dataclass
class RunningMoments:
    """Welford state. ``m`` is the running mean of x - ``shift``; ``shift`` is x_1."""

    count: int = 0
    m: float = 0.0
    s: float = 0.0
    shift: float = 0.0

    def update(self, x: float) -> "RunningMoments":
        return welford_update(self, x)

    @property
    def mean(self) -> float | None:
        return self.shift + self.m if self.count else None

    @property
    def variance(self) -> float | None:
        """Sample variance S_k / (k - 1); ``None`` until two observations."""
        if self.count < 2:
            return None
        return self.s / (self.count - 1)

    @property
    def std(self) -> float | None:
        v = self.variance
        return None if v is None else math.sqrt(v)

    def location_scale(self) -> tuple[float, float]:
        """(mu, sigma) used for standardisation, with unit scale during warmup."""
        if self.count == 0:
            return 0.0, 1.0
        if self.count < 2:
            return self.mean, 1.0
        return self.mean, max(math.sqrt(self.s / (self.count - 1)), SIGMA_FLOOR)


@dataclass
class ExpMoments:
    lam: float
    mu: float = 0.0
    v: float = 1.0
    count: int = 0

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")

    def update(self, x: float) -> "ExpMoments":
        return ewma_update(self, x)

    @property
    def std(self) -> float:
        return math.sqrt(self.v)

    def location_scale(self) -> tuple[float, float]:
        if self.count == 0:
            return 0.0, 1.0
        return self.mu, max(math.sqrt(self.v), SIGMA_FLOOR)


def welford_update(rm: RunningMoments, x: float) -> RunningMoments:
    x = _validated(x)
    rm.count += 1
    if rm.count == 1:
        rm.shift, rm.m, rm.s = x, 0.0, 0.0
    else:
        rm.m, rm.s = welford_step(rm.count, rm.m, rm.s, x - rm.shift)
    return rm


def ewma_update(em: ExpMoments, x: float) -> ExpMoments:
    x = _validated(x)
    em.count += 1
    if em.count == 1:
        # the variance starts at one whatever the scale of the data
        em.mu, em.v = x, 1.0
    else:
        em.mu, em.v = ewma_moments_step(em.lam, em.mu, em.v, x)
    return em


def standardize(x, mu: float, sigma: float):
    if not sigma > 0.0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return (x - mu) / sigma


def destandardize(z, mu: float, sigma: float):
    if not sigma > 0.0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return z * sigma + mu
