"""Quantiles from the Gauss-Hermite CDF estimate.

Root finding happens in standardised units. Newton's method runs first; if
it stalls (tiny derivative, leaves the bracket, non-finite iterate or runs
out of iterations) the solver scans a grid for the leftmost cell where the
CDF crosses ``p`` from below and bisects it, so non-monotone estimates
resolve to the infimum {x : F(x) >= p}.

The alternative CDF steps by (1 - total mass) at z = 0, so p can fall inside
a jump where no z solves F(z) = p. Bisection then collapses onto the jump
and the infimum is the jump point itself; that answer is returned as
converged and flagged ``at_discontinuity``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import CdfCoefficientTable, CdfVariant, cdf, cdf_table, pdf

MIN_DERIVATIVE = 1e-12
MAX_BISECTIONS = 200


@dataclass(frozen=True)
class RootFinderSettings:
    tolerance: float = 1e-9
    max_newton_iters: int = 50
    bracket: tuple[float, float] = (-12.0, 12.0)
    grid_points: int = 64
    refine_grid_points: int = 256

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        lo, hi = self.bracket
        if not lo < hi:
            raise ValueError("bracket must satisfy low < high")
        if self.grid_points < 2 or self.refine_grid_points < 2:
            raise ValueError("grids need at least two points")


@dataclass(frozen=True)
class QuantileResult:
    value: float | None
    converged: bool
    refined_rejected: bool = False
    iterations: int = 0
    standardized: float | None = None
    at_discontinuity: bool = False


def _bisect_leftmost(g, lo: float, hi: float, settings: RootFinderSettings):
    """Find the leftmost upward crossing of zero by ``g`` on a grid, then bisect."""
    grid = np.linspace(lo, hi, settings.grid_points)
    vals = np.asarray(g(grid))
    if vals[0] >= 0.0:
        if abs(vals[0]) <= settings.tolerance:
            return float(grid[0]), True
        return None, False
    up = np.nonzero((vals[:-1] < 0.0) & (vals[1:] >= 0.0))[0]
    if up.size == 0:
        return None, False
    i = int(up[0])
    a, b = float(grid[i]), float(grid[i + 1])
    if abs(vals[i + 1]) <= settings.tolerance:
        return b, True
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (a + b)
        gm = float(g(mid))
        if abs(gm) <= settings.tolerance:
            return mid, True
        if gm < 0.0:
            a = mid
        else:
            b = mid
        if b - a <= 4.0 * math.ulp(max(abs(a), abs(b), 1.0)):
            break
    mid = 0.5 * (a + b)
    if abs(float(g(mid))) <= settings.tolerance:
        return mid, True
    # g < 0 at a and g >= 0 at b with nothing in between: a jump over zero.
    if a < 0.0 <= b:
        return 0.0, True
    return b, True


def solve_standardized(
    a_hat,
    p: float,
    variant: CdfVariant | str = CdfVariant.ALTERNATIVE,
    settings: RootFinderSettings = RootFinderSettings(),
    x0: float | None = None,
    table: CdfCoefficientTable | None = None,
) -> tuple[float | None, bool, int]:
    """Solve F_hat(z) = p in standardised units. Returns ``(z, converged, iterations)``."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    a_hat = np.asarray(a_hat, dtype=float)
    if table is None:
        table = cdf_table(a_hat.size - 1)
    lo, hi = settings.bracket
    if variant == CdfVariant.POSITIVE_SUPPORT:
        lo = max(lo, 0.0)

    def g(z):
        return cdf(a_hat, z, variant, table) - p

    z = 0.0 if x0 is None or not math.isfinite(x0) else float(x0)
    z = min(max(z, lo), hi)
    for it in range(1, settings.max_newton_iters + 1):
        gz = g(z)
        if abs(gz) <= settings.tolerance:
            return z, True, it - 1
        fz = pdf(a_hat, z)
        if not math.isfinite(fz) or abs(fz) < MIN_DERIVATIVE:
            break
        z_next = z - gz / fz
        if not math.isfinite(z_next) or not lo <= z_next <= hi:
            break
        z = z_next
    else:
        if abs(g(z)) <= settings.tolerance:
            return z, True, settings.max_newton_iters
    z_b, ok = _bisect_leftmost(g, lo, hi, settings)
    return z_b, ok, settings.max_newton_iters


def solve_standardized_batch(
    a_hat: np.ndarray,
    p: float,
    variant: CdfVariant | str = CdfVariant.ALTERNATIVE,
    settings: RootFinderSettings = RootFinderSettings(),
    x0: np.ndarray | None = None,
    table: CdfCoefficientTable | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised Newton over independent coefficient vectors (rows of ``a_hat``).

    Rows where Newton stalls are handed to the scalar solver's grid/bisection
    fallback. Unconverged rows come back as NaN.
    """
    a_hat = np.atleast_2d(np.asarray(a_hat, dtype=float))
    rows = a_hat.shape[0]
    if table is None:
        table = cdf_table(a_hat.shape[1] - 1)
    lo, hi = settings.bracket
    if variant == CdfVariant.POSITIVE_SUPPORT:
        lo = max(lo, 0.0)
    z = np.zeros(rows) if x0 is None else np.where(np.isfinite(x0), x0, 0.0).astype(float)
    z = np.clip(z, lo, hi)
    done = np.zeros(rows, dtype=bool)
    failed = np.zeros(rows, dtype=bool)
    for _ in range(settings.max_newton_iters):
        active = ~(done | failed)
        if not active.any():
            break
        za = z[active]
        ga = cdf(a_hat[active], za, variant, table) - p
        hit = np.abs(ga) <= settings.tolerance
        idx = np.nonzero(active)[0]
        done[idx[hit]] = True
        move = ~hit
        if not move.any():
            break
        idx, za, ga = idx[move], za[move], ga[move]
        fa = pdf(a_hat[idx], za)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = za - ga / fa
        bad = ~np.isfinite(fa) | (np.abs(fa) < MIN_DERIVATIVE) | ~np.isfinite(step) | (step < lo) | (step > hi)
        failed[idx[bad]] = True
        z[idx[~bad]] = step[~bad]
    out = np.where(done, z, np.nan)
    for i in np.nonzero(~done)[0]:
        zi, ok, _ = solve_standardized(a_hat[i], p, variant, settings, x0=z[i], table=table)
        if ok:
            out[i] = zi
            done[i] = True
    return out, done


def invert_cdf(snapshot, p: float, settings: RootFinderSettings | None = None, x0: float | None = None) -> QuantileResult:
    """Quantile of a snapshot in original units.

    ``x0`` is an optional warm start in original units.
    """
    settings = settings or snapshot.config.root_finder
    z0 = None if x0 is None else (x0 - snapshot.mu) / snapshot.sigma
    z, ok, iters = solve_standardized(snapshot.a_hat, p, snapshot.config.cdf_variant, settings, z0, snapshot.table)
    if not ok:
        return QuantileResult(None, False, False, iters, None)
    jump = abs(cdf(snapshot.a_hat, z, snapshot.config.cdf_variant, snapshot.table) - p) > settings.tolerance
    return QuantileResult(z * snapshot.sigma + snapshot.mu, True, False, iters, z, jump)


def refine(result: QuantileResult, snapshot, p: float, x_min: float, x_max: float, d: float,
           settings: RootFinderSettings | None = None) -> QuantileResult:
    """Keep a quantile only when it lies in [x_min, x_max] and the density stays >= d there."""
    if not x_min < x_max:
        raise ValueError("x_min must be below x_max")
    if not d > 0:
        raise ValueError("d must be positive")
    settings = settings or snapshot.config.root_finder
    rejected = QuantileResult(None, result.converged, True, result.iterations, result.standardized)
    if not result.converged or result.value is None:
        return rejected
    if not x_min <= result.value <= x_max:
        return rejected
    grid = np.linspace(x_min, x_max, settings.refine_grid_points)
    if np.min(snapshot.pdf_at(grid)) < d:
        return rejected
    return result


def is_below_quantile(snapshot, x: float, p: float) -> bool:
    """True when the raw CDF estimate at ``x`` is below ``p``; no root finding needed."""
    return bool(snapshot.cdf_at(x) < p)
