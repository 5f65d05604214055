import logging
from dataclasses import dataclass
from typing import List, Self, Tuple

import numpy as np

from .errors import ValidationError
from .models import DigitalSet, DyadicCube, decode_keys, encode_keys, parse_header
from .utils import (
    ABS_TOL,
    content_lines,
    format_value,
    header_int,
    parse_int,
    parse_row,
    parse_value,
)

LOGGER_ = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetMeasureQuery:
    """M^s_delta of a digital set with delta = 2^{-delta_depth}."""

    set: DigitalSet
    s: float
    delta_depth: int

    def __post_init__(self) -> None:
        if not 0.0 < self.s <= self.set.dim:
            raise ValidationError("invalid exponent/depth")
        if not 0 <= self.delta_depth <= self.set.depth:
            raise ValidationError("invalid exponent/depth")


@dataclass(frozen=True)
class CoverCertificate:
    cubes: Tuple[DyadicCube, ...]
    value: float
    dim: int
    depth: int

    def replay(self, s: float) -> float:
        return float(sum(c.size(s) for c in self.cubes))

    def covers(self, E: DigitalSet) -> bool:
        """Every cube of E lies in exactly one certificate cube."""
        hits = np.zeros(len(E), dtype=np.int64)
        coords = E.coords
        for cube in self.cubes:
            shift = E.depth - cube.depth
            hits += np.all((coords >> shift) == np.asarray(cube.coords), axis=1)
        return bool(np.all(hits == 1))

    def __str__(self) -> str:
        lines = [f"dim={self.dim} depth={self.depth}"]
        lines.extend(str(c) for c in self.cubes)
        lines.append(f"value={format_value(self.value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> Self:
        lines = content_lines(text)
        if len(lines) < 2 or not lines[-1][1].startswith("value="):
            raise ValidationError("malformed cover certificate")
        first, header_line = lines[0]
        header = parse_header(header_line, ("dim", "depth"))
        dim = header_int(header, "dim", first)
        depth = header_int(header, "depth", first)
        if dim < 1 or depth < 0:
            raise ValidationError(f"line {first}: need dim >= 1 and depth >= 0")
        cubes = []
        for lineno, line in lines[1:-1]:
            parts = parse_row(line, lineno, parse_int)
            if len(parts) != dim + 1:
                raise ValidationError(f"line {lineno}: malformed cube line: {line!r}")
            cubes.append(DyadicCube(parts[0], tuple(parts[1:])))
        last, value_line = lines[-1]
        values = parse_row(value_line.split("=", 1)[1], last, parse_value)
        if len(values) != 1:
            raise ValidationError(f"line {last}: malformed value line: {value_line!r}")
        value = values[0]
        return cls(tuple(cubes), value, dim, depth)


@dataclass
class _Level:
    keys: np.ndarray
    values: np.ndarray
    stop: np.ndarray
    # index of each cube's parent in the level above
    parent: np.ndarray


def _solve(E: DigitalSet, s: float, delta_depth: int) -> List[_Level]:
    """
    Bottom-up dynamic program over the dyadic tree of E.

    value(C) is |C|^s at the resolution of E and min(|C|^s, sum over children)
    above it, where |C|^s is only admissible for depth(C) >= delta_depth. Ties
    within ABS_TOL stop at the coarser cube.
    """
    D, d = E.depth, E.dim
    levels: List[_Level] = [None] * (D + 1)  # type: ignore[list-item]
    coords = E.coords
    values = np.full(len(coords), 2.0 ** (-D * s))
    stop = np.ones(len(coords), dtype=bool)
    keys = E.keys
    for k in range(D - 1, -1, -1):
        parent_coords = coords >> 1
        parent_keys, inverse = np.unique(
            encode_keys(parent_coords, k, d), return_inverse=True
        )
        inverse = inverse.ravel()
        levels[k + 1] = _Level(keys, values, stop, inverse)
        child_sum = np.bincount(inverse, weights=values, minlength=len(parent_keys))
        coords = decode_keys(parent_keys, k, d)
        keys = parent_keys
        if k >= delta_depth:
            coarse = 2.0 ** (-k * s)
            stop = child_sum >= coarse - ABS_TOL
            values = np.where(stop, coarse, child_sum)
        else:
            stop = np.zeros(len(parent_keys), dtype=bool)
            values = child_sum
        LOGGER_.debug("net measure level %d: %d cubes", k, len(keys))
    levels[0] = _Level(keys, values, stop, np.zeros(len(keys), dtype=np.int64))
    return levels


def net_measure(q: NetMeasureQuery) -> float:
    if not q.set:
        return 0.0
    levels = _solve(q.set, q.s, q.delta_depth)
    return float(levels[0].values.sum())


def cell_net_measures(
    E: DigitalSet, s: float, delta_depth: int, cell_depth: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Net measure of E ∩ C for every depth-`cell_depth` cube C meeting E.

    Returns the cells' keys at `cell_depth` and the matching values.
    """
    NetMeasureQuery(E, s, delta_depth)
    if not (0 <= cell_depth <= E.depth):
        raise ValidationError("invalid exponent/depth")
    if not E:
        return np.empty(0, dtype=np.int64), np.empty(0)
    level = _solve(E, s, delta_depth)[cell_depth]
    return level.keys, level.values


def optimal_cover(q: NetMeasureQuery) -> CoverCertificate:
    E = q.set
    if not E:
        return CoverCertificate((), 0.0, E.dim, E.depth)
    levels = _solve(E, q.s, q.delta_depth)
    cubes: List[DyadicCube] = []
    alive = np.ones(len(levels[0].keys), dtype=bool)
    for k, level in enumerate(levels):
        if k > 0:
            prev = levels[k - 1]
            alive = alive_prev[level.parent] & ~prev.stop[level.parent]
        chosen = alive & level.stop
        for row in decode_keys(level.keys[chosen], k, E.dim):
            cubes.append(DyadicCube(k, tuple(int(c) for c in row)))
        alive_prev = alive
    value = float(levels[0].values.sum())
    LOGGER_.debug("optimal cover uses %d cubes, value %.12g", len(cubes), value)
    return CoverCertificate(tuple(cubes), value, E.dim, E.depth)
