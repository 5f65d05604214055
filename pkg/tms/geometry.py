import itertools
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .models import DigitalSet, DyadicCube, encode_keys
from .utils import lsq_slope, window_radii

LOGGER_ = logging.getLogger(__name__)

# largest refined lattice the enlargement transform will allocate
MAX_LATTICE_POINTS = 1 << 26


@dataclass(frozen=True)
class BoxDimEstimate:
    slope: float
    limsup: float
    window: Tuple[int, int]

    def __float__(self) -> float:
        return self.slope


def rasterize_points(
    points: np.ndarray | Sequence[Sequence[float]], depth: int
) -> DigitalSet:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise ValidationError("empty point list")
    if pts.ndim == 1:
        pts = pts[:, None]
    if depth < 0:
        raise ValidationError("depth must be nonnegative")
    if not np.all(np.isfinite(pts)) or pts.min() < 0.0 or pts.max() >= 1.0:
        raise ValidationError("point outside the ambient domain [0,1)^d")
    idx = np.floor(np.ldexp(pts, depth)).astype(np.int64)
    return DigitalSet.from_coords(depth, idx)


def unit_cube(depth: int, dim: int = 1) -> DigitalSet:
    return DigitalSet.full(depth, dim)


def dyadic_cantor_set(depth: int) -> DigitalSet:
    """Keep the first and third quarter of every interval, recursively."""
    pairs, odd = divmod(depth, 2)
    keys = np.zeros(1, dtype=np.int64)
    for _ in range(pairs):
        keys = np.concatenate([4 * keys, 4 * keys + 2])
    if odd:
        keys = np.concatenate([2 * keys, 2 * keys + 1])
    return DigitalSet(depth, 1, keys)


def product(E: DigitalSet, F: DigitalSet) -> DigitalSet:
    if E.depth != F.depth:
        raise ValidationError("product factors must share depth")
    a, b = E.coords, F.coords
    ia, ib = np.meshgrid(np.arange(len(a)), np.arange(len(b)), indexing="ij")
    coords = np.hstack([a[ia.ravel()], b[ib.ravel()]])
    return DigitalSet.from_coords(E.depth, coords)


def enlargement(E: DigitalSet, gamma: float) -> DigitalSet:
    """
    Outer approximation of {x; dist(x, E) < gamma} at the resolution of E.

    A cube is kept when its center lies within gamma + sqrt(d) 2^{-D-1} of the
    closed union of the cubes of E. The distance is exact: on the lattice of
    half-cube steps every nearest point of a closed cube to a cube center is a
    lattice point, so a Euclidean distance transform of that lattice computes it.
    """
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    if not E:
        return E
    d, D = E.dim, E.depth
    size = (1 << (D + 1)) + 1
    if size**d > MAX_LATTICE_POINTS:
        raise ValidationError("resolution exceeded")

    occupied = np.zeros((size,) * d, dtype=bool)
    base = 2 * E.coords
    for offset in itertools.product(range(3), repeat=d):
        occupied[tuple((base + np.asarray(offset)).T)] = True
    dist = ndimage.distance_transform_edt(~occupied, sampling=E.side / 2)

    centers = dist[(slice(1, None, 2),) * d]
    threshold = gamma + math.sqrt(d) * E.side / 2
    coords = np.argwhere(centers <= threshold + 1e-15)
    LOGGER_.debug(
        "enlargement gamma=%g kept %d of %d cubes", gamma, len(coords), centers.size
    )
    return DigitalSet.from_coords(D, coords)


def box_counts(E: DigitalSet, j_max: int) -> List[Tuple[int, int]]:
    if j_max > E.depth:
        raise ValidationError("resolution exceeded")
    if j_max < 0:
        raise ValidationError("j_max must be nonnegative")
    return [(j, len(E.ancestor_keys(j))) for j in range(j_max + 1)]


def _estimate_from_counts(
    js: np.ndarray, counts: np.ndarray, j_lo: int, j_hi: int
) -> BoxDimEstimate:
    logs = np.log2(counts)
    slope = lsq_slope(js, logs)
    positive = js > 0
    limsup = float(np.max(logs[positive] / js[positive])) if positive.any() else 0.0
    return BoxDimEstimate(max(slope, 0.0), limsup, (j_lo, j_hi))


def upper_box_dim_estimate(E: DigitalSet, j_lo: int, j_hi: int) -> BoxDimEstimate:
    if not (0 <= j_lo < j_hi):
        raise ValidationError("window too small")
    if j_hi > E.depth:
        raise ValidationError("resolution exceeded")
    if not E:
        raise ValidationError("empty set")
    js, _ = window_radii(j_lo, j_hi)
    counts = np.asarray([len(E.ancestor_keys(int(j))) for j in js], dtype=float)
    return _estimate_from_counts(js, counts, j_lo, j_hi)


def local_upper_box_dim_estimate(
    K: DigitalSet, probe_depth: int, window: Optional[Tuple[int, int]] = None
) -> BoxDimEstimate:
    """
    Minimum over the depth-`probe_depth` cubes meeting K of the box-dimension
    estimate of K inside the cube. Cells holding an isolated point count.
    """
    if probe_depth >= K.depth:
        raise ValidationError("resolution exceeded")
    if not K:
        raise ValidationError("empty set")
    j_lo, j_hi = window if window is not None else (probe_depth, K.depth)
    if not (0 <= j_lo < j_hi):
        raise ValidationError("window too small")
    if j_hi > K.depth:
        raise ValidationError("resolution exceeded")

    coords = K.coords
    cell_keys = encode_keys(coords >> (K.depth - probe_depth), probe_depth, K.dim)
    cells, cell_of = np.unique(cell_keys, return_inverse=True)
    cell_of = cell_of.ravel()
    js, _ = window_radii(j_lo, j_hi)
    counts = np.ones((len(cells), len(js)), dtype=float)
    for col, j in enumerate(js):
        if j <= probe_depth:
            continue
        keys_j = encode_keys(coords >> (K.depth - int(j)), int(j), K.dim)
        _, first = np.unique(keys_j, return_index=True)
        counts[:, col] = np.bincount(cell_of[first], minlength=len(cells))

    best: Optional[BoxDimEstimate] = None
    for row in counts:
        est = _estimate_from_counts(js, row, j_lo, j_hi)
        if best is None or est.slope < best.slope:
            best = est
    assert best is not None
    LOGGER_.debug("local box dim over %d cells: %g", len(cells), best.slope)
    return best


def cube_of_point(x: Sequence[float], depth: int) -> DyadicCube:
    pts = np.atleast_1d(np.asarray(x, dtype=float))
    if pts.min() < 0.0 or pts.max() >= 1.0:
        raise ValidationError("point outside the ambient domain [0,1)^d")
    n = 1 << depth
    return DyadicCube(depth, tuple(int(v) for v in np.floor(pts * n)))
