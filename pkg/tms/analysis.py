import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError
from .geometry import upper_box_dim_estimate
from .measures import MassIndex
from .models import AtomicMeasure, DigitalSet, SpectrumCurve
from .utils import lsq_slope, parallel_map, two_point_slopes, window_radii

LOGGER_ = logging.getLogger(__name__)

LevelMode = Literal["fit", "lower", "upper"]

# exponents beyond this overflow a double when leaving the log domain
LOG_DOUBLE_MAX = 709.0


@dataclass(frozen=True)
class LocalDimEstimate:
    lower: float
    upper: float
    fit: float
    window: Tuple[int, int]
    ratio_lower: float = math.nan
    ratio_upper: float = math.nan
    flag: str = ""


@dataclass(frozen=True)
class LocalDimField:
    """Local dimension estimates at many points, one entry per point."""

    points: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    fit: np.ndarray
    window: Tuple[int, int]

    @property
    def on_support(self) -> np.ndarray:
        """Points whose balls carry mass at every radius of the window."""
        return np.isfinite(self.upper)


def _estimates(
    log_r: np.ndarray, log_m: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Row-wise lower, upper and fit from log masses; -inf marks an empty ball.

    Ball masses are monotone in r, so the finite entries of a row are a prefix
    of the radii ordered from large to small.
    """
    finite = np.isfinite(log_m)
    n = finite.sum(axis=1)
    w = finite.astype(float)
    y = np.where(finite, log_m, 0.0)
    x_mean = (w * log_r).sum(axis=1) / np.maximum(n, 1)
    y_mean = y.sum(axis=1) / np.maximum(n, 1)
    xc = (log_r[None, :] - x_mean[:, None]) * w
    sxx = (xc * xc).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        fit = (xc * (y - y_mean[:, None])).sum(axis=1) / sxx
        rises = np.diff(np.where(finite, log_m, np.nan), axis=1)
        slopes = rises / np.diff(log_r)[None, :]
    pair_ok = np.isfinite(slopes)
    lower = np.where(pair_ok, slopes, np.inf).min(axis=1)
    upper = np.where(pair_ok, slopes, -np.inf).max(axis=1)

    several = n >= 2
    fit[several] = np.clip(fit[several], lower[several], upper[several])
    rows = np.flatnonzero(n == 1)
    if len(rows):
        # one positive radius: the quotient log m / log r is the only estimate
        idx = np.argmax(finite[rows], axis=1)
        ratio = y[rows, idx] / log_r[idx]
        lower[rows] = upper[rows] = fit[rows] = ratio
    empty = n == 0
    lower[empty] = upper[empty] = np.inf
    fit[empty] = np.nan
    upper[~finite.all(axis=1)] = np.inf
    return lower, upper, fit


def local_dims(
    mu: AtomicMeasure,
    x: Sequence[float] | float,
    j_lo: int,
    j_hi: int,
    index: Optional[MassIndex] = None,
) -> LocalDimEstimate:
    js, rs = window_radii(j_lo, j_hi)
    index = index or MassIndex(mu)
    center = np.atleast_1d(np.asarray(x, dtype=float))
    masses = index.masses(np.repeat(center[None, :], len(rs), axis=0), rs)
    with np.errstate(divide="ignore"):
        log_m = np.log(masses)
    log_r = np.log(rs)
    lower, upper, fit = _estimates(log_r, log_m[None, :])
    positive = masses > 0
    flag = ""
    if not positive.all():
        flag = "zero-mass radii" if positive.any() else "all radii zero-mass"
    ratios = log_m[positive] / log_r[positive]
    return LocalDimEstimate(
        float(lower[0]),
        float(upper[0]),
        float(fit[0]),
        (j_lo, j_hi),
        float(ratios.min()) if len(ratios) else math.inf,
        float(ratios.max()) if len(ratios) else math.inf,
        flag,
    )


def local_dim_field(
    mu: AtomicMeasure, points: np.ndarray, j_lo: int, j_hi: int, threads: int = 1
) -> LocalDimField:
    js, rs = window_radii(j_lo, j_hi)
    index = MassIndex(mu)
    pts = np.asarray(points, dtype=float)
    columns = parallel_map(lambda r: index.masses(pts, r), list(rs), threads)
    with np.errstate(divide="ignore"):
        log_m = np.log(np.stack(columns, axis=1))
    lower, upper, fit = _estimates(np.log(rs), log_m)
    return LocalDimField(pts, lower, upper, fit, (j_lo, j_hi))


def level_mask(
    field: LocalDimField, alpha: float, epsilon: float, mode: LevelMode = "fit"
) -> np.ndarray:
    """
    `fit`: fit within epsilon of alpha. `lower`: lower at most alpha + epsilon.
    `upper`: upper at least alpha - epsilon. Points with an empty ball in the
    window are off the support and only enter `upper` sets.
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    if mode == "fit":
        return field.on_support & (np.abs(field.fit - alpha) <= epsilon)
    if mode == "lower":
        return field.on_support & (field.lower <= alpha + epsilon)
    if mode == "upper":
        return field.upper >= alpha - epsilon
    raise ValidationError(f"unknown level set mode {mode!r}")


def coarse_level_set(
    mu: AtomicMeasure,
    K: DigitalSet,
    alpha: float,
    epsilon: float,
    window: Tuple[int, int],
    mode: LevelMode = "fit",
    threads: int = 1,
) -> DigitalSet:
    field = local_dim_field(mu, K.centers(), *window, threads=threads)
    mask = level_mask(field, alpha, epsilon, mode)
    return DigitalSet(K.depth, K.dim, K.keys[mask])


def coarse_spectrum(
    mu: AtomicMeasure,
    K: DigitalSet,
    alpha_grid: Sequence[float],
    epsilon: float,
    window: Tuple[int, int],
    mode: LevelMode = "fit",
    box_window: Optional[Tuple[int, int]] = None,
    threads: int = 1,
) -> SpectrumCurve:
    """Box-dimension estimate of the coarse level set at every α of the grid."""
    box_lo, box_hi = box_window if box_window is not None else (2, K.depth - 2)
    field = local_dim_field(mu, K.centers(), *window, threads=threads)
    values, flags = [], []
    for alpha in alpha_grid:
        mask = level_mask(field, alpha, epsilon, mode)
        if not mask.any():
            values.append(-math.inf)
            flags.append("empty")
            continue
        level = DigitalSet(K.depth, K.dim, K.keys[mask])
        values.append(upper_box_dim_estimate(level, box_lo, box_hi).slope)
        flags.append("packing-caveat" if mode == "upper" else "")
    LOGGER_.info("coarse spectrum over %d alphas (%s mode)", len(values), mode)
    grid = tuple(float(a) for a in alpha_grid)
    return SpectrumCurve(grid, tuple(values), tuple(flags))


@dataclass(frozen=True)
class LqSpectrum:
    fit: SpectrumCurve
    lower: SpectrumCurve


def lq_spectrum(
    mu: AtomicMeasure,
    q_grid: Sequence[float],
    window: Tuple[int, int],
    threads: int = 1,
) -> LqSpectrum:
    """
    Scaling of S_r(q) = Σ_i w_i μ(B(x_i, r))^{q-1} along r = 2^{-j}.

    Sums are taken in the log domain; a q whose terms would overflow a double
    outside it carries the flag `capped`.
    """
    if not mu.is_probability:
        raise ValidationError("not probability measures")
    js, rs = window_radii(*window)
    index = MassIndex(mu)
    columns = parallel_map(lambda r: index.masses(mu.points, r), list(rs), threads)
    log_m = np.log(np.stack(columns, axis=1))
    log_w = np.log(mu.weights)
    log_r = np.log(rs)

    fits, lowers, flags = [], [], []
    for q in q_grid:
        if q == 1.0:
            fits.append(0.0)
            lowers.append(0.0)
            flags.append("")
            continue
        terms = log_w[:, None] + (q - 1.0) * log_m
        log_s = logsumexp(terms, axis=0)
        fits.append(lsq_slope(log_r, log_s))
        lowers.append(float(two_point_slopes(log_r, log_s).min()))
        capped = bool(np.abs(terms).max() > LOG_DOUBLE_MAX)
        flags.append("capped" if capped else "")
        if capped:
            LOGGER_.warning("moment sum at q=%g leaves the double range", q)
    grid = tuple(float(q) for q in q_grid)
    return LqSpectrum(
        SpectrumCurve(grid, tuple(fits), tuple(flags)),
        SpectrumCurve(grid, tuple(lowers), tuple(flags)),
    )


def legendre_transform(curve: SpectrumCurve, alpha: float) -> float:
    """inf over the grid of qα - D(q); -inf values of D are skipped."""
    best = math.inf
    for q, value in zip(curve.grid, curve.values):
        if value == -math.inf or math.isnan(value):
            continue
        best = min(best, q * alpha - value)
    if best == math.inf:
        LOGGER_.warning("no finite spectrum value: transform is +inf")
    return best


def legendre_curve(curve: SpectrumCurve, alpha_grid: Sequence[float]) -> SpectrumCurve:
    values = tuple(legendre_transform(curve, a) for a in alpha_grid)
    flags = tuple("all-infinite" if v == math.inf else "" for v in values)
    return SpectrumCurve(tuple(float(a) for a in alpha_grid), values, flags)


def reference_typical_spectrum(s: float, q: float) -> float:
    """0 for q ≥ 1, -s(1 - q) on [0, 1), -inf for q < 0."""
    if s <= 0:
        raise ValidationError("s must be positive")
    if q >= 1.0:
        return 0.0
    if q >= 0.0:
        return -s * (1.0 - q)
    return -math.inf


def reference_curve(s: float, q_grid: Sequence[float]) -> SpectrumCurve:
    grid = tuple(float(q) for q in q_grid)
    return SpectrumCurve(grid, tuple(reference_typical_spectrum(s, q) for q in grid))
