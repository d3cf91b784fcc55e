"""Hermite polynomials, the normal density and incomplete gamma functions.

Everything here is a pure function. Scalar incomplete gammas use the usual
series / continued-fraction split; the CDF code additionally needs whole
ladders of half-integer gammas evaluated on arrays, which
:func:`half_integer_gammas` produces by recurrence.
"""
from __future__ import annotations

import math
import sys

import numpy as np
from scipy import special

SQRT_PI = math.sqrt(math.pi)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

GAMMA_TOL = 1e-15
GAMMA_MAX_ITER = 500
_FPMIN = sys.float_info.min / sys.float_info.epsilon


class DomainError(ValueError):
    """Raised when an argument lies outside a function's domain."""


def _check_finite(x) -> None:
    if not np.all(np.isfinite(x)):
        raise DomainError(f"non-finite argument: {x!r}")


def hermite_all(x, n: int) -> np.ndarray:
    """Physicists' Hermite polynomials H_0(x)..H_n(x).

    Uses the upward recurrence H_{k+1} = 2x H_k - 2k H_{k-1}. ``x`` may be a
    scalar or an array; the polynomial index is the trailing axis of the
    result, so the shape is ``np.shape(x) + (n + 1,)``.
    """
    if n < 0:
        raise DomainError(f"order must be non-negative, got {n}")
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    out = np.empty(x.shape + (n + 1,))
    out[..., 0] = 1.0
    if n >= 1:
        out[..., 1] = 2.0 * x
    for k in range(1, n):
        out[..., k + 1] = 2.0 * x * out[..., k] - 2.0 * k * out[..., k - 1]
    return out


def hermite_functions(x, n: int) -> np.ndarray:
    """Orthonormal Hermite functions h_k(x) = (2^k k! sqrt(pi))^(-1/2) e^(-x^2/2) H_k(x)."""
    x = np.asarray(x, dtype=float)
    h = hermite_all(x, n)
    k = np.arange(n + 1)
    log_norm = -0.5 * (k * math.log(2.0) + special.gammaln(k + 1) + 0.5 * math.log(math.pi))
    return h * np.exp(log_norm) * np.exp(-0.5 * x * x)[..., None]


def normal_pdf(x):
    """Standard normal density. Works on scalars and arrays."""
    if isinstance(x, (float, int)) or np.ndim(x) == 0:
        x = float(x)
        if not math.isfinite(x):
            raise DomainError(f"non-finite argument: {x!r}")
        return INV_SQRT_2PI * math.exp(-0.5 * x * x)
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    return INV_SQRT_2PI * np.exp(-0.5 * x * x)


def _is_half_integer(a: float) -> bool:
    return (2.0 * a).is_integer()


def gamma_fn(a: float) -> float:
    """Gamma function; half-integer arguments are built by exact recursion."""
    a = float(a)
    if not a > 0.0 or not math.isfinite(a):
        raise DomainError(f"gamma_fn requires a > 0, got {a}")
    if _is_half_integer(a) and a <= 171.0:
        if a.is_integer():
            g, start = 1.0, 1.0
        else:
            g, start = SQRT_PI, 0.5
        while start < a:
            g *= start
            start += 1.0
        return g
    return math.gamma(a)


def _lower_series(a: float, x: float) -> float:
    # gamma(a, x) = x^a e^-x sum_n x^n / (a (a+1) ... (a+n))
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(GAMMA_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * GAMMA_TOL:
            break
    return total * math.exp(-x + a * math.log(x))


def _upper_continued_fraction(a: float, x: float) -> float:
    # modified Lentz evaluation of the Legendre continued fraction for Gamma(a, x)
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, GAMMA_MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < GAMMA_TOL:
            break
    return math.exp(-x + a * math.log(x)) * h


def _check_gamma_args(a: float, x: float) -> tuple[float, float]:
    a, x = float(a), float(x)
    if not a > 0.0 or not math.isfinite(a):
        raise DomainError(f"incomplete gamma requires a > 0, got {a}")
    if not x >= 0.0:
        raise DomainError(f"incomplete gamma requires x >= 0, got {x}")
    return a, x


def lower_gamma(a: float, x: float) -> float:
    """Lower incomplete gamma function gamma(a, x) = int_0^x t^(a-1) e^-t dt."""
    a, x = _check_gamma_args(a, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return gamma_fn(a)
    if x < a + 1.0:
        return _lower_series(a, x)
    return gamma_fn(a) - _upper_continued_fraction(a, x)


def upper_gamma(a: float, x: float) -> float:
    """Upper incomplete gamma function Gamma(a, x) = int_x^inf t^(a-1) e^-t dt."""
    a, x = _check_gamma_args(a, x)
    if x == 0.0:
        return gamma_fn(a)
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return gamma_fn(a) - _lower_series(a, x)
    return _upper_continued_fraction(a, x)


def half_integer_gammas(x, m_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper incomplete gammas at a = (m + 1)/2 for m = 0..m_max.

    Returns ``(lower, upper)``, each of shape ``np.shape(x) + (m_max + 1,)``.
    The two ladders a = 1/2, 3/2, ... and a = 1, 2, ... are seeded with
    erf/erfc and exp and stepped with

        gamma(a+1, x) = a gamma(a, x) - x^a e^-x
        Gamma(a+1, x) = a Gamma(a, x) + x^a e^-x

    Both recurrences are used upward, which keeps the upper ladder free of
    cancellation and the lower ladder accurate in absolute terms.
    """
    if np.ndim(x) == 0:
        lo, up = half_integer_gammas_scalar(float(x), m_max)
        return np.array(lo), np.array(up)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(np.isnan(x)):
        raise DomainError("half_integer_gammas requires x >= 0")
    lower = np.empty(x.shape + (m_max + 1,))
    upper = np.empty(x.shape + (m_max + 1,))
    ex = np.exp(-x)
    rx = np.sqrt(x)
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(m_max + 1):
            a = 0.5 * (m + 1)
            if m == 0:
                lower[..., 0] = SQRT_PI * special.erf(rx)
                upper[..., 0] = SQRT_PI * special.erfc(rx)
            elif m == 1:
                lower[..., 1] = -np.expm1(-x)
                upper[..., 1] = ex
            else:
                prev = a - 1.0
                # x^prev e^-x, kept finite for large x where e^-x underflows first
                kernel = np.where(x > 0.0, np.exp(prev * np.log(np.where(x > 0.0, x, 1.0)) - x), 0.0)
                lower[..., m] = prev * lower[..., m - 2] - kernel
                upper[..., m] = prev * upper[..., m - 2] + kernel
    return lower, upper


def half_integer_gammas_scalar(x: float, m_max: int) -> tuple[list[float], list[float]]:
    """Plain-float twin of :func:`half_integer_gammas` for a single ``x``."""
    if not x >= 0.0:
        raise DomainError("half_integer_gammas requires x >= 0")
    rx = math.sqrt(x)
    lower = [SQRT_PI * math.erf(rx), -math.expm1(-x)]
    upper = [SQRT_PI * math.erfc(rx), math.exp(-x)]
    log_x = math.log(x) if x > 0.0 else None
    for m in range(2, m_max + 1):
        prev = 0.5 * (m - 1)
        kernel = math.exp(prev * log_x - x) if log_x is not None else 0.0
        lower.append(prev * lower[m - 2] - kernel)
        upper.append(prev * upper[m - 2] + kernel)
    return lower[: m_max + 1], upper[: m_max + 1]


def hermite_scalar(x: float, n: int) -> list[float]:
    """Plain-float H_0(x)..H_n(x) by the same recurrence as :func:`hermite_all`."""
    h = [1.0, 2.0 * x]
    for k in range(1, n):
        h.append(2.0 * x * h[k] - 2.0 * k * h[k - 1])
    return h[: n + 1]
