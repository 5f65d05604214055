import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import NumericError, ValidationError
from .ifs import Cylinders
from .models import (
    AtomicMeasure,
    DigitalSet,
    DyadicCube,
    IFSystem,
    ProbVector,
    encode_keys,
)
from .net_measure import NetMeasureQuery, net_measure, optimal_cover
from .utils import ABS_TOL, parallel_map

LOGGER_ = logging.getLogger(__name__)

RadiusRule = Literal["corrected", "printed"]


def ball_mass(mu: AtomicMeasure, x: Sequence[float] | float, r: float) -> float:
    """μ(B(x, r)) for the open Euclidean ball."""
    if r <= 0:
        raise ValidationError("radius must be positive")
    center = np.atleast_1d(np.asarray(x, dtype=float))
    if len(center) != mu.dim:
        raise ValidationError("dimension mismatch")
    dist = np.linalg.norm(mu.points - center, axis=1)
    return float(mu.weights[dist < r].sum())


class MassIndex:
    """
    Batched open-ball masses of one measure.

    On the line the atoms are sorted once and masses come from a cumulative sum;
    in higher dimension a k-d tree answers the ball queries.
    """

    def __init__(self, mu: AtomicMeasure) -> None:
        self.mu = mu
        if mu.dim == 1:
            order = np.argsort(mu.points[:, 0], kind="stable")
            self._xs = mu.points[order, 0]
            self._cum = np.concatenate([[0.0], np.cumsum(mu.weights[order])])
            self._tree = None
        else:
            self._tree = cKDTree(mu.points)

    def masses(self, centers: np.ndarray, r: float | np.ndarray) -> np.ndarray:
        pts = np.asarray(centers, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None] if self.mu.dim == 1 else pts[None, :]
        radii = np.broadcast_to(np.asarray(r, dtype=float), (len(pts),))
        if self._tree is None:
            x = pts[:, 0]
            lo = np.searchsorted(self._xs, x - radii, side="right")
            hi = np.searchsorted(self._xs, x + radii, side="left")
            return np.maximum(self._cum[hi] - self._cum[lo], 0.0)
        # query_ball_point is closed; shrink by one ulp for the open ball
        shrunk = np.nextafter(radii, 0.0)
        out = np.empty(len(pts))
        for i, idx in enumerate(self._tree.query_ball_point(pts, shrunk)):
            out[i] = self.mu.weights[idx].sum()
        return out


def blend(nu: AtomicMeasure, mu0: AtomicMeasure, t: float) -> AtomicMeasure:
    """(1 - t) ν + t μ₀."""
    if not 0.0 <= t <= 1.0:
        raise ValidationError("invalid blend weight")
    if not (nu.is_probability and mu0.is_probability):
        raise ValidationError("not probability measures")
    if nu.dim != mu0.dim:
        raise ValidationError("dimension mismatch")
    return AtomicMeasure(
        np.vstack([nu.points, mu0.points]),
        np.concatenate([(1.0 - t) * nu.weights, t * mu0.weights]),
    )


def perturbed_cover_measure(
    nu: AtomicMeasure, mu0: AtomicMeasure
) -> Tuple[AtomicMeasure, float]:
    """μ_ν = (1 - 1/N) ν + (1/N) μ₀ with N the support size of ν, and the factor 1/N."""
    factor = 1.0 / len(nu)
    return blend(nu, mu0, factor), factor


def prevalence_segment(
    theta: AtomicMeasure, a: Sequence[float] | float, t: float
) -> AtomicMeasure:
    """t Θ + (1 - t) δ_a."""
    return blend(AtomicMeasure.dirac(a), theta, t)


def mixture_factors(count: int) -> np.ndarray:
    k = np.arange(1, count + 1)
    return np.ldexp(1.0, -k) / (1.0 - math.ldexp(1.0, -count))


def geometric_mixture(measures: Sequence[AtomicMeasure]) -> AtomicMeasure:
    """Σ_k 2^{-k} μ_k renormalized by 1/(1 - 2^{-K})."""
    if not measures:
        raise ValidationError("empty measure list")
    if len({mu.dim for mu in measures}) != 1:
        raise ValidationError("dimension mismatch")
    if not all(mu.is_probability for mu in measures):
        raise ValidationError("not probability measures")
    factors = mixture_factors(len(measures))
    return AtomicMeasure(
        np.vstack([mu.points for mu in measures]),
        np.concatenate([f * mu.weights for f, mu in zip(factors, measures)]),
    )


def lebesgue_proxy(depth: int, dim: int = 1) -> AtomicMeasure:
    """Uniform measure on the centers of all depth-`depth` cubes."""
    return AtomicMeasure.uniform(DigitalSet.full(depth, dim).centers())


def self_similar_measure(
    ifs: IFSystem, p: ProbVector, n: int, max_atoms: int = 1 << 22
) -> AtomicMeasure:
    """
    Bernoulli measure at level n: one atom at the image of the cube center under
    each composite map of length n, with mass Π p_{i_j}.
    """
    if p.m != ifs.m:
        raise ValidationError("probability vector and maps differ in length")
    if ifs.m**n > max_atoms:
        raise NumericError("depth too large for ratios")
    cyl = Cylinders.root(ifs)
    for _ in range(n):
        cyl = cyl.expand(ifs)
    center = np.full(ifs.dim, 0.5)
    rotated = np.einsum("nij,j->ni", cyl.rotation, center)
    points = cyl.ratio[:, None] * rotated + cyl.translation
    masses = np.prod(p.as_array()[None, :] ** cyl.counts, axis=1)
    return AtomicMeasure(points, masses / masses.sum())


def binomial_cascade(p1: float, depth: int) -> AtomicMeasure:
    binary = IFSystem.homotheties((0.5, 0.5), (0.0, 0.5))
    return self_similar_measure(binary, ProbVector.of((p1, 1.0 - p1)), depth)


@dataclass(frozen=True)
class CoverAtom:
    level: int
    point: Tuple[float, ...]
    side: float
    omega: float


@dataclass(frozen=True)
class LevelReport:
    level: int
    delta_depth: int
    budget: float
    sigma: float
    rho: float
    omega: float
    cubes: int


@dataclass
class Prop41Diagnostics:
    alpha: float
    budget_scale: float
    levels: List[LevelReport] = field(default_factory=list)
    atoms: List[CoverAtom] = field(default_factory=list)
    tail_bound: float = 0.0


def representatives(K: DigitalSet, cubes: Sequence[DyadicCube]) -> np.ndarray:
    """
    For every cube B the lexicographically smallest center of a K cube inside B.

    K's keys are sorted lexicographically, so the first K cube seen under each
    ancestor is the smallest one.
    """
    out = np.empty((len(cubes), K.dim))
    coords = K.coords
    centers = K.centers()
    by_depth: Dict[int, List[int]] = {}
    for i, cube in enumerate(cubes):
        by_depth.setdefault(cube.depth, []).append(i)
    for depth, idx in by_depth.items():
        anc, first = np.unique(
            encode_keys(coords >> (K.depth - depth), depth, K.dim), return_index=True
        )
        wanted = encode_keys(np.asarray([cubes[i].coords for i in idx]), depth, K.dim)
        pos = np.clip(np.searchsorted(anc, wanted), 0, len(anc) - 1)
        if len(anc) == 0 or np.any(anc[pos] != wanted):
            raise ValidationError("target not contained in K")
        out[idx] = centers[first[pos]]
    return out


def prop41_measure(
    K: DigitalSet,
    E: DigitalSet,
    alpha: float,
    n_max: int,
    budget_scale: float | Literal["auto"] = 1.0,
) -> Tuple[AtomicMeasure, Prop41Diagnostics]:
    """
    The cover measure μ₀ = Σ_n ω_n Σ_{B ∈ B_n} |B|^α δ_{x_B}, truncated at n_max.

    Level n covers E by dyadic cubes with Σ|B|^α within the budget
    budget_scale 2^{-(n+1)}, using the deepest admissible cover depth from n+1 on.
    """
    if not E:
        raise ValidationError("empty target")
    if E.depth != K.depth or E.dim != K.dim or not E.issubset(K):
        raise ValidationError("target not contained in K")
    if alpha <= 0 or alpha > E.dim:
        raise ValidationError("invalid exponent/depth")
    if n_max < 1:
        raise ValidationError("n_max must be at least 1")

    def value(depth: int) -> float:
        return net_measure(NetMeasureQuery(E, alpha, depth))

    if budget_scale == "auto":
        needed = value(min(n_max + 1, E.depth)) * math.ldexp(1.0, n_max + 1)
        scale = max(1.0, needed * (1.0 + 1e-9))
        if scale > 1.0:
            LOGGER_.warning(
                "cover budgets scaled by %.6g to stay reachable at depth %d",
                scale,
                E.depth,
            )
    else:
        scale = float(budget_scale)
        if scale <= 0:
            raise ValidationError("budget scale must be positive")

    diag = Prop41Diagnostics(alpha, scale)
    covers = []
    for n in range(1, n_max + 1):
        budget = scale * math.ldexp(1.0, -(n + 1))
        depth = min(n + 1, E.depth)
        if value(depth) > budget + ABS_TOL:
            raise NumericError(f"cover budget unreachable at n={n}")
        while depth < E.depth and value(depth + 1) <= budget + ABS_TOL:
            depth += 1
        cert = optimal_cover(NetMeasureQuery(E, alpha, depth))
        covers.append((n, depth, budget, cert))

    raw = np.asarray([2.0 ** (n / 2) * cert.value for n, _, _, cert in covers])
    c = 1.0 / raw.sum()
    points, weights = [], []
    for n, depth, budget, cert in covers:
        omega = c * 2.0 ** (n / 2)
        sides = [cube.side for cube in cert.cubes]
        diag.levels.append(
            LevelReport(
                n, depth, budget, cert.value, min(sides), omega, len(cert.cubes)
            )
        )
        for cube, x in zip(cert.cubes, representatives(K, cert.cubes)):
            point = tuple(float(v) for v in x)
            points.append(point)
            weights.append(omega * cube.size(alpha))
            diag.atoms.append(CoverAtom(n, point, cube.side, omega))
    # Σ_{n > n_max} ω_n budget_n
    diag.tail_bound = c * scale / 2 * 2.0 ** (-(n_max + 1) / 2) / (1 - 2.0**-0.5)
    LOGGER_.info(
        "cover measure: %d levels, %d atoms, tail bound %.3g",
        n_max,
        len(points),
        diag.tail_bound,
    )
    w = np.asarray(weights)
    return AtomicMeasure(np.asarray(points), w / w.sum()), diag


@dataclass(frozen=True)
class SprayReport:
    center: Tuple[float, ...]
    count: int
    gap_bound: float
    min_gap: float
    witness_radius: float


def spray_scales(
    n: int, s: float, radius_rule: RadiusRule = "corrected"
) -> Tuple[float, float]:
    """Required gap between sprayed points and the radius certifying U_{l,m}."""
    if s <= 0:
        raise ValidationError("s must be positive")
    base = n ** (-1.0 / s) if radius_rule == "corrected" else n ** (-s)
    return 8.0 * base, 2.0 * base


def _farthest_point_packing(
    candidates: np.ndarray, count: int, gap: float
) -> Tuple[np.ndarray, float]:
    chosen = [0]
    dist = np.linalg.norm(candidates - candidates[0], axis=1)
    min_gap = math.inf
    while len(chosen) < count:
        i = int(np.argmax(dist))
        if dist[i] <= gap:
            raise NumericError("insufficient local box dimension for spray")
        min_gap = min(min_gap, float(dist[i]))
        chosen.append(i)
        dist = np.minimum(dist, np.linalg.norm(candidates - candidates[i], axis=1))
    return candidates[np.sort(chosen)], min_gap


def spray_measure(
    mu: AtomicMeasure,
    K: DigitalSet,
    s: float,
    rho: float,
    N: Sequence[int],
    radius_rule: RadiusRule = "corrected",
    threads: int = 1,
) -> Tuple[AtomicMeasure, List[SprayReport]]:
    """
    Replace every atom x_i by N_i equal atoms at grid points of K within ρ of
    x_i, pairwise further apart than the gap of the radius rule.
    """
    if len(N) != len(mu):
        raise ValidationError("one count per atom is required")
    if rho <= 0 or any(n < 1 for n in N):
        raise ValidationError("rho and counts must be positive")
    if len(mu) > 1:
        tree = cKDTree(mu.points)
        nearest, _ = tree.query(mu.points, k=2)
        if rho >= nearest[:, 1].min() / 4:
            raise ValidationError("rho must be below a quarter of the atom separation")
    grid = K.centers()

    def spray(i: int) -> Tuple[np.ndarray, SprayReport]:
        x = mu.points[i]
        gap, witness = spray_scales(N[i], s, radius_rule)
        near = grid[np.linalg.norm(grid - x, axis=1) < rho]
        if len(near) < N[i]:
            raise NumericError("insufficient local box dimension for spray")
        pts, min_gap = _farthest_point_packing(near, N[i], gap)
        return pts, SprayReport(tuple(x), N[i], gap, min_gap, witness)

    results = parallel_map(spray, list(range(len(mu))), threads)
    points = np.vstack([pts for pts, _ in results])
    weights = np.concatenate([np.full(n, w / n) for n, w in zip(N, mu.weights)])
    LOGGER_.info("sprayed %d atoms into %d", len(mu), len(points))
    return AtomicMeasure(points, weights), [rep for _, rep in results]


def ulm_window(
    N: Sequence[int], s: float, radius_rule: RadiusRule = "corrected"
) -> Tuple[int, int, Tuple[float, ...]]:
    """(l, m) with every witness radius inside (1/m, 1/l)."""
    radii = tuple(spray_scales(n, s, radius_rule)[1] for n in N)
    l = math.ceil(1.0 / max(radii)) - 1
    m = math.floor(1.0 / min(radii)) + 1
    if l < 1:
        raise ValidationError("empty radius interval")
    return l, m, radii


@dataclass
class UlmResult:
    member: bool
    points: np.ndarray
    witnesses: np.ndarray
    radii: np.ndarray

    @property
    def missing(self) -> int:
        return int(np.isnan(self.witnesses).sum())


def ulm_radii(l: int, m: int, r_grid: int) -> np.ndarray:
    if not m > l >= 1 or r_grid < 1:
        raise ValidationError("empty radius interval")
    return np.geomspace(1.0 / m, 1.0 / l, r_grid + 2)[1:-1]


def check_Ulm(
    mu: AtomicMeasure,
    K: DigitalSet,
    l: int,
    m: int,
    s: float,
    r_grid: int,
    threads: int = 1,
    radii: Optional[np.ndarray] = None,
) -> UlmResult:
    """
    Search, for every grid point x of K, a radius r in (1/m, 1/l) with
    μ(B(x, r)) < r^s. A positive answer is certified; a negative one only means
    no witness was found on the radius grid.
    """
    rs = ulm_radii(l, m, r_grid) if radii is None else np.asarray(radii, dtype=float)
    if rs.size == 0 or rs.min() <= 1.0 / m or rs.max() >= 1.0 / l:
        raise ValidationError("empty radius interval")
    index = MassIndex(mu)
    points = K.centers()

    def hits(r: float) -> np.ndarray:
        return index.masses(points, r) < r**s

    found = parallel_map(hits, list(rs), threads)
    witnesses = np.full(len(points), np.nan)
    for r, ok in zip(rs, found):
        fresh = ok & np.isnan(witnesses)
        witnesses[fresh] = r
    result = UlmResult(bool(not np.isnan(witnesses).any()), points, witnesses, rs)
    LOGGER_.info(
        "U_{l,m} check l=%d m=%d: %d of %d points without witness",
        l,
        m,
        result.missing,
        len(points),
    )
    return result
