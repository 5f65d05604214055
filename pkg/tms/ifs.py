import itertools
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special

from .errors import NumericError, ValidationError
from .geometry import upper_box_dim_estimate
from .models import Code, DigitalSet, IFSystem, ProbVector
from .utils import ABS_TOL

LOGGER_ = logging.getLogger(__name__)

MAX_CYLINDERS = 1 << 22
GRID_PITCH = 1e-3


def _check_ratios(ratios: Sequence[float]) -> np.ndarray:
    r = np.asarray(ratios, dtype=float)
    if r.ndim != 1 or len(r) < 2 or np.any(r <= 0) or np.any(r >= 1):
        raise ValidationError("ratios must be at least two numbers in (0,1)")
    return r


def similarity_dimension(ratios: Sequence[float]) -> float:
    """The root s of r_1^s + ... + r_m^s = 1."""
    r = _check_ratios(ratios)
    hi = 1.0
    while np.sum(r**hi) >= 1.0:
        hi *= 2.0
    return float(optimize.bisect(lambda s: np.sum(r**s) - 1.0, 0.0, hi, xtol=ABS_TOL))


def entropy_dim(p: ProbVector | Sequence[float], ratios: Sequence[float]) -> float:
    """Λ(p) = Σ p_j log p_j / Σ p_j log r_j, with 0 log 0 = 0."""
    r = _check_ratios(ratios)
    q = _as_prob(p)
    if len(q) != len(r):
        raise ValidationError("probability vector and ratios differ in length")
    return float(np.sum(special.xlogy(q, q)) / np.dot(q, np.log(r)))


def _as_prob(p: ProbVector | Sequence[float]) -> np.ndarray:
    if isinstance(p, ProbVector):
        return p.as_array()
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or np.any(arr < 0) or abs(arr.sum() - 1.0) > ABS_TOL:
        raise ValidationError("not a probability vector")
    return arr


def _water_fill(caps: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    The simplex point p_j = min(caps_j, t w_j), p_m = t w_m with Σ p = 1.

    Coordinates 1..m-1 carry caps; the last one is free.
    """
    order = np.argsort(caps[:-1] / weights[:-1], kind="stable")
    breaks = caps[:-1][order] / weights[:-1][order]
    capped = 0.0
    free = weights.sum()
    t = (1.0 - capped) / free
    for i, j in enumerate(order):
        if t <= breaks[i]:
            break
        capped += caps[j]
        free -= weights[j]
        t = (1.0 - capped) / free
    p = np.minimum(np.append(caps[:-1], np.inf), t * weights)
    return p / p.sum()


def _lambda_parts(p: np.ndarray, costs: np.ndarray) -> Tuple[float, float]:
    """Entropy and mean cost: Λ(p) is their ratio."""
    return float(-np.sum(special.xlogy(p, p))), float(np.dot(p, costs))


def _dinkelbach(
    caps: np.ndarray, costs: np.ndarray, max_iter: int = 200
) -> Tuple[float, np.ndarray]:
    p = np.zeros(len(costs))
    p[-1] = 1.0
    theta = 0.0
    for it in range(max_iter):
        # maximizer of H(p) - theta L(p) over the capped simplex
        q = _water_fill(caps, np.exp(-theta * costs))
        h, l = _lambda_parts(q, costs)
        gap = h - theta * l
        LOGGER_.debug("dinkelbach iteration %d: theta=%.15g gap=%.3g", it, theta, gap)
        if gap <= 1e-14:
            break
        p, theta = q, h / l
    else:
        raise NumericError("fractional program did not converge")
    return theta, p


def _capped_grid(caps: np.ndarray, pitch: float) -> np.ndarray:
    """
    Points of C(λ) with p_j = t_j min(caps_j, 1) for j < m, where t_j runs over a
    regular grid of [0, 1].
    """
    t = np.linspace(0.0, 1.0, round(1.0 / pitch) + 1)
    axes = [t * min(float(c), 1.0) for c in caps[:-1]]
    head = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    last = 1.0 - head.sum(axis=1)
    keep = last >= -1e-15
    return np.column_stack([head[keep], np.maximum(last[keep], 0.0)])


def _grid_maximum(
    caps: np.ndarray, costs: np.ndarray, pitch: float = GRID_PITCH
) -> Tuple[float, np.ndarray]:
    pts = _capped_grid(caps, pitch)
    values = -np.sum(special.xlogy(pts, pts), axis=1) / (pts @ costs)
    best = int(np.argmax(values))
    return float(values[best]), pts[best]


def f_maximizer(
    lam: float,
    ratios: Sequence[float],
    s: Optional[float] = None,
    cross_check: bool = True,
) -> Tuple[float, np.ndarray]:
    """
    max Λ(p) over C(λ) = {p ∈ Δ; p_j ≤ λ r_j^s for j < m} and a maximizer.

    Dinkelbach iteration on the linear-fractional form H(p)/L(p); for m ≤ 3 a
    dense simplex grid is evaluated too and the better of both is kept.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValidationError("lambda out of range")
    r = _check_ratios(ratios)
    s = similarity_dimension(r) if s is None else s
    caps = lam * r**s
    caps[-1] = 1.0
    costs = -np.log(r)
    if lam == 0.0:
        p = np.zeros(len(r))
        p[-1] = 1.0
        return 0.0, p

    value, p = _dinkelbach(caps, costs)
    if cross_check and len(r) <= 3:
        grid_value, grid_p = _grid_maximum(caps, costs)
        if grid_value > value + 1e-9:
            LOGGER_.warning(
                "grid maximum %.12g beats Dinkelbach %.12g at lambda=%g",
                grid_value,
                value,
                lam,
            )
            value, p = grid_value, grid_p
    return value, p


def grid_f_of_lambda(
    lam: float,
    ratios: Sequence[float],
    s: Optional[float] = None,
    pitch: float = GRID_PITCH,
) -> float:
    """max Λ over a grid of C(λ) whose corners include the caps (m ≤ 3)."""
    if not 0.0 <= lam <= 1.0:
        raise ValidationError("lambda out of range")
    r = _check_ratios(ratios)
    if len(r) > 3:
        raise ValidationError("grid search needs m <= 3")
    s = similarity_dimension(r) if s is None else s
    caps = lam * r**s
    caps[-1] = 1.0
    return _grid_maximum(caps, -np.log(r), pitch)[0]


def f_of_lambda(
    lam: float,
    ratios: Sequence[float],
    s: Optional[float] = None,
    cross_check: bool = True,
) -> float:
    return f_maximizer(lam, ratios, s, cross_check)[0]


def g_of_alpha(
    alpha: float,
    ratios: Sequence[float],
    s: Optional[float] = None,
    cross_check: bool = True,
) -> float:
    """sup{λ; f(λ) = α} by bisection; f is continuous and nondecreasing."""
    r = _check_ratios(ratios)
    s = similarity_dimension(r) if s is None else s
    if not 0.0 < alpha < s:
        raise ValidationError("alpha out of range")
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if f_of_lambda(mid, r, s, cross_check) <= alpha + ABS_TOL:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class CodePoint:
    point: np.ndarray
    diameter: float


def code_point(ifs: IFSystem, code: Code) -> CodePoint:
    """S_{i_1} ∘ ... ∘ S_{i_n} applied to the center of the unit cube."""
    if not len(code):
        raise ValidationError("code must be nonempty")
    if code.alphabet > ifs.m or any(d > ifs.m for d in code.digits):
        raise ValidationError("digits must lie in 1..m")
    x = np.full((1, ifs.dim), 0.5)
    for digit in reversed(code.digits):
        x = ifs.maps[digit - 1].apply(x)
    ratio = math.prod(ifs.maps[d - 1].ratio for d in code.digits)
    diameter = ratio * math.sqrt(ifs.dim)
    return CodePoint(x[0], diameter)


def digit_frequency(code: Code) -> ProbVector:
    if not len(code):
        raise ValidationError("code must be nonempty")
    counts = np.bincount(np.asarray(code.digits) - 1, minlength=code.alphabet)
    return ProbVector.of(counts / len(code))


def frequency_counts(p: ProbVector, n: int) -> np.ndarray:
    """⌊n p_j⌋ topped up by largest remainders so the counts sum to n."""
    exact = p.as_array() * n
    counts = np.floor(exact + 1e-9).astype(np.int64)
    short = n - int(counts.sum())
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def frequency_schedule(p: ProbVector, n: int) -> List[int]:
    """Digits 1..m of length n; every prefix keeps each digit near its share of p."""
    target = frequency_counts(p, n)
    placed = np.zeros(p.m, dtype=np.int64)
    schedule = []
    for t in range(1, n + 1):
        deficit = np.where(placed < target, target * t / n - placed, -np.inf)
        j = int(np.argmax(deficit))
        schedule.append(j + 1)
        placed[j] += 1
    return schedule


def sample_frequency_codes(
    p: ProbVector, n: int, count: int, seed: int = 0
) -> List[Code]:
    """
    Deterministic low-discrepancy codes with digit counts fixed by p.

    The schedule places at each position the digit lagging furthest behind its
    target share; the seed only picks the rotations of that schedule.
    """
    if n < p.m:
        raise ValidationError("code too short")
    if count < 1:
        raise ValidationError("count must be positive")
    schedule = frequency_schedule(p, n)
    rng = np.random.default_rng(seed)
    offsets = np.resize(rng.permutation(n), count)
    return [Code(tuple(schedule[o:] + schedule[:o]), p.m) for o in offsets]


def bernoulli_cylinder_mass(p: ProbVector, code: Code) -> float:
    if code.alphabet > p.m or any(d > p.m for d in code.digits):
        raise ValidationError("digits must lie in 1..m")
    return math.prod(p.entries[d - 1] for d in code.digits)


@dataclass
class Cylinders:
    """Composite maps x ↦ ratio R x + t of a batch of codes, with their digit counts."""

    ratio: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    counts: np.ndarray

    @classmethod
    def root(cls, ifs: IFSystem) -> "Cylinders":
        d = ifs.dim
        return cls(
            np.ones(1),
            np.eye(d)[None, :, :],
            np.zeros((1, d)),
            np.zeros((1, ifs.m), dtype=np.int64),
        )

    def __len__(self) -> int:
        return len(self.ratio)

    def select(self, mask: np.ndarray) -> "Cylinders":
        return Cylinders(
            self.ratio[mask],
            self.rotation[mask],
            self.translation[mask],
            self.counts[mask],
        )

    def expand(self, ifs: IFSystem) -> "Cylinders":
        parts = []
        for i, sim in enumerate(ifs.maps):
            m = sim.matrix()
            counts = self.counts.copy()
            counts[:, i] += 1
            parts.append(
                Cylinders(
                    self.ratio * sim.ratio,
                    self.rotation @ m,
                    self.ratio[:, None]
                    * np.einsum("nij,j->ni", self.rotation, np.asarray(sim.translation))
                    + self.translation,
                    counts,
                )
            )
        return Cylinders(
            np.concatenate([c.ratio for c in parts]),
            np.concatenate([c.rotation for c in parts]),
            np.concatenate([c.translation for c in parts]),
            np.concatenate([c.counts for c in parts]),
        )

    def boxes(self) -> Tuple[np.ndarray, np.ndarray]:
        """Bounding boxes of the images of the unit cube."""
        d = self.translation.shape[1]
        corners = np.asarray(list(itertools.product((0.0, 1.0), repeat=d)))
        rotated = np.einsum("nij,cj->nci", self.rotation, corners)
        images = self.ratio[:, None, None] * rotated
        images += self.translation[:, None, :]
        return images.min(axis=1), images.max(axis=1)


def _rasterize_boxes(lo: np.ndarray, hi: np.ndarray, depth: int) -> DigitalSet:
    """Depth-`depth` cubes meeting the half-open boxes [lo, hi)."""
    n = 1 << depth
    first = np.clip(np.floor(lo * n + 1e-9).astype(np.int64), 0, n - 1)
    last = np.clip(np.ceil(hi * n - 1e-9).astype(np.int64) - 1, 0, n - 1)
    last = np.maximum(last, first)
    widths = last - first
    span = int(widths.max()) + 1
    d = lo.shape[1]
    keys = []
    for offset in itertools.product(range(span), repeat=d):
        off = np.asarray(offset)
        ok = np.all(off <= widths, axis=1)
        keys.append(DigitalSet.from_coords(depth, first[ok] + off).keys)
    return DigitalSet(depth, d, np.concatenate(keys))


def ifs_digital_set(
    ifs: IFSystem, depth: int, max_cylinders: int = MAX_CYLINDERS
) -> DigitalSet:
    """
    Outer digital approximation of the attractor: codes are expanded until
    their cylinders have diameter at most 2^{-depth}, then the cylinder boxes
    are rasterized.
    """
    side = math.ldexp(1.0, -depth)
    diam = math.sqrt(ifs.dim)
    done: List[Cylinders] = []
    live = Cylinders.root(ifs)
    while len(live):
        small = live.ratio * diam <= side
        done.append(live.select(small))
        live = live.select(~small)
        if not len(live):
            break
        if len(live) * ifs.m + sum(len(c) for c in done) > max_cylinders:
            raise NumericError("depth too large for ratios")
        live = live.expand(ifs)
    lo = np.concatenate([c.boxes()[0] for c in done])
    hi = np.concatenate([c.boxes()[1] for c in done])
    E = _rasterize_boxes(lo, hi, depth)
    LOGGER_.info(
        "rasterized attractor at depth %d from %d cylinders: %d cubes",
        depth,
        len(lo),
        len(E),
    )
    return E


def frequency_set(
    ifs: IFSystem, lam: float, n: int, depth: int, max_cylinders: int = MAX_CYLINDERS
) -> DigitalSet:
    """Rasterized cylinders of the length-n codes with digit frequency in C(λ)."""
    if not 0.0 <= lam <= 1.0:
        raise ValidationError("lambda out of range")
    if n < 1:
        raise ValidationError("code too short")
    r = np.asarray(ifs.ratios)
    s = similarity_dimension(r)
    limits = np.floor(n * lam * r[:-1] ** s + 1e-9).astype(np.int64)
    live = Cylinders.root(ifs)
    for _ in range(n):
        live = live.expand(ifs)
        live = live.select(np.all(live.counts[:, :-1] <= limits, axis=1))
        if len(live) > max_cylinders:
            raise NumericError("depth too large for ratios")
    lo, hi = live.boxes()
    return _rasterize_boxes(lo, hi, depth)


@dataclass(frozen=True)
class FrequencyShadow:
    alpha: float
    lam: float
    p_star: Tuple[float, ...]
    set: DigitalSet
    box_dim: float


def frequency_family(
    ifs: IFSystem,
    alphas: Sequence[float],
    n: int,
    depth: int,
    window: Optional[Tuple[int, int]] = None,
) -> List[FrequencyShadow]:
    """
    The sets K(C(g(α))) at finite code length: for every α the λ = g(α), a
    maximizer p* of Λ on C(λ), and the rasterized frequency set.
    """
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValidationError("alphas must be strictly increasing")
    r = ifs.ratios
    s = similarity_dimension(r)
    j_lo, j_hi = window if window is not None else (2, depth)
    shadows = []
    for alpha in alphas:
        lam = g_of_alpha(alpha, r, s)
        _, p_star = f_maximizer(lam, r, s)
        E = frequency_set(ifs, lam, n, depth)
        est = upper_box_dim_estimate(E, j_lo, j_hi).slope if E else -math.inf
        LOGGER_.info(
            "alpha=%g lambda=%.6g cubes=%d box dim=%.4g", alpha, lam, len(E), est
        )
        p_star = tuple(float(v) for v in p_star)
        shadows.append(FrequencyShadow(alpha, lam, p_star, E, est))
    return shadows
