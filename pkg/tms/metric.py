import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import ot
from scipy.spatial.distance import cdist

from .errors import NumericError, ValidationError
from .geometry import enlargement
from .models import AtomicMeasure, DigitalSet

LOGGER_ = logging.getLogger(__name__)

MAX_SUPPORT = 400
PIVOT_TOL = 1e-12
PRUNE_CHUNK = 4096


@dataclass(frozen=True)
class FMProgram:
    """
    max Σ c_i f_i over |f_i| ≤ 1 and f_i - f_j ≤ ‖z_i - z_j‖ for the kept pairs.

    Pairs whose constraint already follows from the box or from two shorter
    pairs through a third point are not kept.
    """

    points: np.ndarray
    c: np.ndarray
    distances: np.ndarray
    pairs: np.ndarray

    @property
    def size(self) -> int:
        return len(self.points)


def _check_measures(mu: AtomicMeasure, nu: AtomicMeasure) -> None:
    if not (mu.is_probability and nu.is_probability):
        raise ValidationError("not probability measures")
    if mu.dim != nu.dim:
        raise ValidationError("dimension mismatch")


def build_program(mu: AtomicMeasure, nu: AtomicMeasure) -> FMProgram:
    _check_measures(mu, nu)
    points, inverse = np.unique(
        np.vstack([mu.points, nu.points]), axis=0, return_inverse=True
    )
    inverse = inverse.ravel()
    if len(points) > MAX_SUPPORT:
        raise ValidationError(f"merged support exceeds {MAX_SUPPORT} points")
    signed = np.concatenate([mu.weights, -nu.weights])
    c = np.bincount(inverse, weights=signed, minlength=len(points))
    dist = cdist(points, points)

    M = len(points)
    iu, ju = np.triu_indices(M, k=1)
    d = dist[iu, ju]
    keep = d < 2.0
    if M > 2:
        # a pair is implied when some third point lies strictly inside the segment
        # between them; both halves are then strictly shorter than the pair
        for start in range(0, len(iu), PRUNE_CHUNK):
            sl = slice(start, start + PRUNE_CHUNK)
            to_i, to_j = dist[iu[sl], :], dist[ju[sl], :]
            tol = (1e-12 * np.maximum(d[sl], 1.0))[:, None]
            slack = to_i + to_j - d[sl, None]
            slack[(to_i <= tol) | (to_j <= tol)] = np.inf
            keep[sl] &= ~np.any(slack <= tol, axis=1)
    pairs = np.stack([iu[keep], ju[keep]], axis=1)
    return FMProgram(points, c, dist, pairs)


def _simplex_max(
    A: np.ndarray, b: np.ndarray, c: np.ndarray, max_iter: int = 50_000
) -> Tuple[float, np.ndarray]:
    """
    max c x subject to A x ≤ b, x ≥ 0 with b ≥ 0, by a dense tableau simplex
    under Bland's rule. The slack basis is feasible, so no first phase is needed.
    """
    rows, n = A.shape
    T = np.zeros((rows + 1, n + rows + 1))
    T[:rows, :n] = A
    T[:rows, n : n + rows] = np.eye(rows)
    T[:rows, -1] = b
    T[-1, :n] = -c
    basis = np.arange(n, n + rows)
    for it in range(max_iter):
        candidates = np.flatnonzero(T[-1, :-1] < -PIVOT_TOL)
        if not len(candidates):
            break
        e = int(candidates[0])
        col = T[:rows, e]
        positive = col > PIVOT_TOL
        if not positive.any():
            raise NumericError("linear program is unbounded")
        ratios = np.full(rows, np.inf)
        ratios[positive] = T[:rows, -1][positive] / col[positive]
        best = ratios.min()
        tied = np.flatnonzero(ratios <= best + PIVOT_TOL)
        leave = int(tied[np.argmin(basis[tied])])
        T[leave] /= T[leave, e]
        pivot_row = T[leave].copy()
        T -= np.outer(T[:, e], pivot_row)
        T[leave] = pivot_row
        basis[leave] = e
    else:
        raise NumericError("simplex iteration cap reached")
    LOGGER_.debug("simplex finished after %d pivots", it)
    x = np.zeros(n + rows)
    x[basis] = T[:rows, -1]
    return float(T[-1, -1]), x[:n]


def solve_program(program: FMProgram) -> Tuple[float, np.ndarray]:
    """Optimal value and test function values f on the merged support."""
    M = program.size
    c = program.c
    # L(μ,ν) = L(ν,μ): solve one canonical sign of c
    nonzero = np.flatnonzero(np.abs(c) > 0)
    if not len(nonzero):
        return 0.0, np.zeros(M)
    sign = -1.0 if c[nonzero[0]] < 0 else 1.0
    c = sign * c

    P = len(program.pairs)
    A = np.zeros((M + 2 * P, M))
    A[np.arange(M), np.arange(M)] = 1.0
    b = np.full(M + 2 * P, 2.0)
    for k, (i, j) in enumerate(program.pairs):
        A[M + 2 * k, i], A[M + 2 * k, j] = 1.0, -1.0
        A[M + 2 * k + 1, i], A[M + 2 * k + 1, j] = -1.0, 1.0
        b[M + 2 * k] = b[M + 2 * k + 1] = program.distances[i, j]
    # f = g - 1 with g in [0, 2]; Σ c_i = 0 for probability inputs
    value, g = _simplex_max(A, b, c)
    f = sign * (g - 1.0)
    return max(value - float(c.sum()), 0.0), f


def fortet_mourier(mu: AtomicMeasure, nu: AtomicMeasure) -> float:
    """sup |∫ f dμ - ∫ f dν| over 1-bounded 1-Lipschitz f, as an exact LP."""
    program = build_program(mu, nu)
    value, _ = solve_program(program)
    LOGGER_.debug(
        "fortet-mourier on %d points with %d pairs: %.12g",
        program.size,
        len(program.pairs),
        value,
    )
    return value


def fortet_mourier_transport(mu: AtomicMeasure, nu: AtomicMeasure) -> float:
    """The same distance as optimal transport for the ground metric min(2, ‖x - y‖)."""
    _check_measures(mu, nu)
    cost = np.minimum(cdist(mu.points, nu.points), 2.0)
    a = mu.weights / mu.weights.sum()
    b = nu.weights / nu.weights.sum()
    return float(ot.emd2(a, b, cost, numItermax=10_000_000))


def fm_distance(mu: AtomicMeasure, nu: AtomicMeasure) -> float:
    """The simplex when the merged support fits, optimal transport otherwise."""
    _check_measures(mu, nu)
    merged = len(np.unique(np.vstack([mu.points, nu.points]), axis=0))
    if merged <= MAX_SUPPORT:
        return fortet_mourier(mu, nu)
    return fortet_mourier_transport(mu, nu)


@dataclass(frozen=True)
class ProbeResult:
    excess: float
    distance: float


def lemma_topo1_probe(
    mu: AtomicMeasure, nu: AtomicMeasure, E: DigitalSet, gamma: float
) -> ProbeResult:
    """μ(E) - ν(E(γ)) next to L(μ, ν)."""
    grown = enlargement(E, gamma)
    return ProbeResult(mu.mass_in(E) - nu.mass_in(grown), fm_distance(mu, nu))


def shifted(mu: AtomicMeasure, shift: float) -> AtomicMeasure:
    """μ translated along axis 1, clipped to the ambient cube."""
    pts = np.array(mu.points)
    pts[:, 0] = np.clip(pts[:, 0] + shift, 0.0, np.nextafter(1.0, 0.0))
    return AtomicMeasure(pts, mu.weights)


@dataclass(frozen=True)
class FrontierPoint:
    shift: float
    distance: float
    excess: float


def lemma_topo1_frontier(
    mu: AtomicMeasure, E: DigitalSet, gamma: float, shifts: Sequence[float]
) -> List[FrontierPoint]:
    grown = enlargement(E, gamma)
    inside = mu.mass_in(E)
    frontier = []
    for t in shifts:
        nu = shifted(mu, t)
        excess = inside - nu.mass_in(grown)
        frontier.append(FrontierPoint(float(t), fm_distance(mu, nu), excess))
    LOGGER_.info("probed %d shifts at gamma=%g", len(frontier), gamma)
    return frontier
