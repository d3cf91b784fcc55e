"""Truncated Gauss-Hermite density and its closed-form CDF estimators.

Integrating H_k(x) Z(x) term by term turns every CDF into a double sum over
(k, l), 0 <= l <= k/2, of constants times incomplete gammas at
a = (k - 2l + 1)/2 evaluated at x^2/2. Only the exponent m = k - 2l enters
the gamma, so for a fixed coefficient vector the double sum collapses to a
single sum over m = 0..N with weights

    w_m = sum_{k - 2l = m} a_hat_k c(k, l),
    c(k, l) = k! (-1)^l 2^(3k/2 - 3l - 1) / (l! (k - 2l)! sqrt(pi)).

The three variants differ only in which gamma they use and in sign:

* ``full_line``: F(x) = int_{-inf}^x f_hat.
* ``alternative``: as full_line, but the total mass int f_hat is replaced by
  one for x >= 0, so F -> 1 as x -> inf.
* ``positive_support``: F(x) = int_0^x f_hat, for data on [0, inf).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .special_functions import (
    DomainError,
    gamma_fn,
    half_integer_gammas,
    half_integer_gammas_scalar,
    hermite_all,
    hermite_scalar,
    normal_pdf,
)


class CdfVariant(str, Enum):
    FULL_LINE = "full_line"
    ALTERNATIVE = "alternative"
    POSITIVE_SUPPORT = "positive_support"


@dataclass(frozen=True)
class CdfCoefficientTable:
    """Constants of the CDF double sum for a given truncation order.

    ``c[k, m]`` holds c(k, l) with l = (k - m)/2, zero where k - m is odd or
    negative. ``gamma_const[m]`` is Gamma((m + 1)/2) and ``parity[m]`` is (-1)^m.
    """

    n_terms: int
    c: np.ndarray
    gamma_const: np.ndarray
    parity: np.ndarray

    @property
    def parity_list(self) -> list[float]:
        return self.parity.tolist()

    @property
    def gamma_list(self) -> list[float]:
        return self.gamma_const.tolist()

    def weights(self, a_hat) -> np.ndarray:
        """Collapse coefficients (any leading batch shape) to per-m weights."""
        return np.asarray(a_hat, dtype=float) @ self.c


@lru_cache(maxsize=None)
def cdf_table(n_terms: int) -> CdfCoefficientTable:
    if not 0 <= n_terms <= 64:
        raise DomainError(f"n_terms out of range: {n_terms}")
    c = np.zeros((n_terms + 1, n_terms + 1))
    for k in range(n_terms + 1):
        for l in range(k // 2 + 1):
            m = k - 2 * l
            log_mag = (
                math.lgamma(k + 1)
                + (1.5 * k - 3 * l - 1) * math.log(2.0)
                - math.lgamma(l + 1)
                - math.lgamma(m + 1)
                - 0.5 * math.log(math.pi)
            )
            c[k, m] = (-1) ** l * math.exp(log_mag)
    m = np.arange(n_terms + 1)
    gamma_const = np.array([gamma_fn(0.5 * (j + 1)) for j in m])
    parity = np.where(m % 2 == 0, 1.0, -1.0)
    for arr in (c, gamma_const, parity):
        arr.setflags(write=False)
    return CdfCoefficientTable(n_terms, c, gamma_const, parity)


def _n_terms_of(a_hat) -> int:
    return np.shape(a_hat)[-1] - 1


def pdf(a_hat, x):
    """f_hat(x) = sum_k a_hat_k H_k(x) Z(x). May be negative."""
    a_hat = np.asarray(a_hat, dtype=float)
    if a_hat.ndim == 1 and np.ndim(x) == 0:
        x = float(x)
        if not math.isfinite(x):
            raise DomainError("pdf requires finite x")
        h = hermite_scalar(x, a_hat.size - 1)
        return math.fsum(a * hk for a, hk in zip(a_hat.tolist(), h)) * normal_pdf(x)
    x_arr = np.asarray(x, dtype=float)
    h = hermite_all(x_arr, _n_terms_of(a_hat))
    out = np.sum(a_hat * h, axis=-1) * normal_pdf(x_arr)
    return float(out) if out.ndim == 0 else out


def cdf(a_hat, x, variant: CdfVariant | str = CdfVariant.ALTERNATIVE, table: CdfCoefficientTable | None = None):
    """Raw (unclamped) CDF estimate of the requested variant.

    ``a_hat`` may carry leading batch dimensions that broadcast against ``x``.
    """
    variant = CdfVariant(variant)
    a_hat = np.asarray(a_hat, dtype=float)
    n = _n_terms_of(a_hat)
    if table is None:
        table = cdf_table(n)
    if a_hat.ndim == 1 and np.ndim(x) == 0:
        return _cdf_scalar(table.weights(a_hat).tolist(), float(x), variant, table)
    x_arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x_arr)):
        raise DomainError("cdf requires finite x")
    if variant is CdfVariant.POSITIVE_SUPPORT and np.any(x_arr < 0.0):
        raise DomainError("positive_support CDF is only defined for x >= 0")

    w = table.weights(a_hat)
    lower, upper = half_integer_gammas(0.5 * x_arr * x_arr, n)
    pos = (x_arr >= 0.0)[..., None]

    if variant is CdfVariant.POSITIVE_SUPPORT:
        out = np.sum(w * lower, axis=-1)
    else:
        # x < 0 branch is shared by both full-line variants
        left = np.sum(w * table.parity * upper, axis=-1)
        if variant is CdfVariant.FULL_LINE:
            right = np.sum(w * (table.parity * table.gamma_const + lower), axis=-1)
        else:
            right = 1.0 - np.sum(w * upper, axis=-1)
        out = np.where(pos[..., 0], right, left)
    return float(out) if np.ndim(out) == 0 else out


def _cdf_scalar(w: list[float], x: float, variant: CdfVariant, table: CdfCoefficientTable) -> float:
    if not math.isfinite(x):
        raise DomainError("cdf requires finite x")
    if variant is CdfVariant.POSITIVE_SUPPORT and x < 0.0:
        raise DomainError("positive_support CDF is only defined for x >= 0")
    lower, upper = half_integer_gammas_scalar(0.5 * x * x, len(w) - 1)
    if variant is CdfVariant.POSITIVE_SUPPORT:
        return sum(wm * g for wm, g in zip(w, lower))
    if x < 0.0:
        return sum(wm * sgn * g for wm, sgn, g in zip(w, table.parity_list, upper))
    if variant is CdfVariant.FULL_LINE:
        return sum(wm * (sgn * gc + g) for wm, sgn, gc, g in zip(w, table.parity_list, table.gamma_list, lower))
    return 1.0 - sum(wm * g for wm, g in zip(w, upper))


def cdf_clamped(a_hat, x, variant: CdfVariant | str = CdfVariant.ALTERNATIVE, table=None):
    """CDF estimate truncated to [0, 1] for reporting."""
    out = np.clip(cdf(a_hat, x, variant, table), 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def total_mass(a_hat) -> float:
    """int f_hat over the real line; only even orders contribute."""
    a_hat = np.asarray(a_hat, dtype=float)
    k = np.arange(a_hat.shape[-1])
    # E[H_{2j}(X)] = (2j)!/j! for X ~ N(0, 1)
    moments = np.zeros(k.size)
    for j in range(0, k.size, 2):
        moments[j] = math.factorial(j) / math.factorial(j // 2)
    return a_hat @ moments
