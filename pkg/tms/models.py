import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Self, Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .utils import (
    ABS_TOL,
    content_lines,
    format_value,
    header_int,
    parse_int,
    parse_row,
    parse_value,
)

MAX_KEY_BITS = 62


def encode_keys(coords: np.ndarray, depth: int, dim: int) -> np.ndarray:
    keys = np.zeros(len(coords), dtype=np.int64)
    for axis in range(dim):
        keys = (keys << depth) | coords[:, axis].astype(np.int64)
    return keys


def decode_keys(keys: np.ndarray, depth: int, dim: int) -> np.ndarray:
    mask = (1 << depth) - 1
    coords = np.empty((len(keys), dim), dtype=np.int64)
    for axis in range(dim):
        coords[:, axis] = (keys >> (depth * (dim - 1 - axis))) & mask
    return coords


@dataclass(frozen=True, order=True)
class DyadicCube:
    depth: int
    coords: Tuple[int, ...]

    def __post_init__(self) -> None:
        if self.depth < 0:
            raise ValidationError("cube depth must be nonnegative")
        if not self.coords:
            raise ValidationError("cube needs at least one coordinate")
        n = 1 << self.depth
        if any(c < 0 or c >= n for c in self.coords):
            raise ValidationError("cube outside the ambient domain [0,1)^d")

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def side(self) -> float:
        return math.ldexp(1.0, -self.depth)

    @property
    def lower(self) -> Tuple[float, ...]:
        return tuple(c * self.side for c in self.coords)

    @property
    def center(self) -> Tuple[float, ...]:
        return tuple((c + 0.5) * self.side for c in self.coords)

    def size(self, s: float) -> float:
        """|C|^s with |C| the side length."""
        return self.side**s

    def ancestor(self, depth: int) -> "DyadicCube":
        if depth > self.depth:
            raise ValidationError("ancestor must be coarser")
        shift = self.depth - depth
        return DyadicCube(depth, tuple(c >> shift for c in self.coords))

    def children(self) -> List["DyadicCube"]:
        return [
            DyadicCube(
                self.depth + 1, tuple(2 * c + b for c, b in zip(self.coords, bits))
            )
            for bits in itertools.product((0, 1), repeat=self.dim)
        ]

    def contains(self, other: "DyadicCube") -> bool:
        return other.depth >= self.depth and other.ancestor(self.depth) == self

    def __str__(self) -> str:
        return " ".join(str(v) for v in (self.depth, *self.coords))


class DigitalSet:
    """
    A finite union of half-open dyadic cubes of one depth inside [0,1)^d.

    Cubes are stored as sorted row-major integer keys, so iteration order is
    the lexicographic order of the cube coordinates.
    """

    __slots__ = ("depth", "dim", "keys")

    def __init__(self, depth: int, dim: int, keys: Iterable[int] | np.ndarray) -> None:
        if depth < 0 or dim < 1:
            raise ValidationError("invalid depth or dimension")
        if depth * dim > MAX_KEY_BITS:
            raise ValidationError("resolution exceeded")
        if not isinstance(keys, np.ndarray):
            keys = list(keys)
        arr = np.unique(np.asarray(keys, dtype=np.int64))
        if len(arr) and (arr[0] < 0 or arr[-1] >= (1 << (depth * dim))):
            raise ValidationError("cube outside the ambient domain [0,1)^d")
        arr.flags.writeable = False
        self.depth = depth
        self.dim = dim
        self.keys = arr

    @classmethod
    def from_coords(
        cls, depth: int, coords: np.ndarray | Sequence[Sequence[int]]
    ) -> Self:
        arr = np.asarray(coords, dtype=np.int64)
        if arr.ndim != 2:
            raise ValidationError("coordinates must be a 2-d array")
        if arr.size and (arr.min() < 0 or arr.max() >= (1 << depth)):
            raise ValidationError("cube outside the ambient domain [0,1)^d")
        return cls(depth, arr.shape[1], encode_keys(arr, depth, arr.shape[1]))

    @classmethod
    def from_cubes(
        cls,
        cubes: Sequence[DyadicCube],
        depth: Optional[int] = None,
        dim: Optional[int] = None,
    ) -> Self:
        if not cubes:
            if depth is None or dim is None:
                raise ValidationError("empty cube list needs depth and dimension")
            return cls.empty(depth, dim)
        depths = {c.depth for c in cubes}
        if len(depths) != 1:
            raise ValidationError("all cubes of a digital set share one depth")
        return cls.from_coords(depths.pop(), [c.coords for c in cubes])

    @classmethod
    def full(cls, depth: int, dim: int) -> Self:
        return cls(depth, dim, np.arange(1 << (depth * dim), dtype=np.int64))

    @classmethod
    def empty(cls, depth: int, dim: int) -> Self:
        return cls(depth, dim, np.empty(0, dtype=np.int64))

    @property
    def side(self) -> float:
        return math.ldexp(1.0, -self.depth)

    @property
    def coords(self) -> np.ndarray:
        return decode_keys(self.keys, self.depth, self.dim)

    def centers(self) -> np.ndarray:
        return (self.coords + 0.5) * self.side

    def cubes(self) -> Iterator[DyadicCube]:
        for row in self.coords:
            yield DyadicCube(self.depth, tuple(int(c) for c in row))

    def __iter__(self) -> Iterator[DyadicCube]:
        return self.cubes()

    def __len__(self) -> int:
        return len(self.keys)

    def __bool__(self) -> bool:
        return len(self.keys) > 0

    def __contains__(self, cube: DyadicCube) -> bool:
        if cube.depth != self.depth or cube.dim != self.dim:
            return False
        key = encode_keys(np.asarray([cube.coords]), self.depth, self.dim)[0]
        i = np.searchsorted(self.keys, key)
        return bool(i < len(self.keys) and self.keys[i] == key)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DigitalSet):
            return NotImplemented
        return (
            self.depth == other.depth
            and self.dim == other.dim
            and np.array_equal(self.keys, other.keys)
        )

    def __hash__(self) -> int:
        return hash((self.depth, self.dim, self.keys.tobytes()))

    def __repr__(self) -> str:
        return f"DigitalSet(dim={self.dim}, depth={self.depth}, cubes={len(self)})"

    def _check_compatible(self, other: "DigitalSet") -> None:
        if self.depth != other.depth or self.dim != other.dim:
            raise ValidationError("digital sets must share depth and dimension")

    def union(self, other: "DigitalSet") -> "DigitalSet":
        self._check_compatible(other)
        return DigitalSet(self.depth, self.dim, np.union1d(self.keys, other.keys))

    def intersection(self, other: "DigitalSet") -> "DigitalSet":
        self._check_compatible(other)
        keys = np.intersect1d(self.keys, other.keys, assume_unique=True)
        return DigitalSet(self.depth, self.dim, keys)

    def difference(self, other: "DigitalSet") -> "DigitalSet":
        self._check_compatible(other)
        keys = np.setdiff1d(self.keys, other.keys, assume_unique=True)
        return DigitalSet(self.depth, self.dim, keys)

    def issubset(self, other: "DigitalSet") -> bool:
        self._check_compatible(other)
        return bool(np.isin(self.keys, other.keys, assume_unique=True).all())

    def ancestor_keys(self, depth: int) -> np.ndarray:
        """Sorted unique keys (at `depth`) of every coarser cube meeting the set."""
        if depth > self.depth:
            raise ValidationError("resolution exceeded")
        if depth == self.depth:
            return self.keys
        coarse = self.coords >> (self.depth - depth)
        return np.unique(encode_keys(coarse, depth, self.dim))

    def within(self, cube: DyadicCube) -> "DigitalSet":
        """The cubes of the set contained in a coarser cube."""
        if cube.depth > self.depth or cube.dim != self.dim:
            raise ValidationError("resolution exceeded")
        shift = self.depth - cube.depth
        anc = encode_keys(self.coords >> shift, cube.depth, self.dim)
        target = encode_keys(np.asarray([cube.coords]), cube.depth, self.dim)[0]
        return DigitalSet(self.depth, self.dim, self.keys[anc == target])

    def contains_points(self, points: np.ndarray) -> np.ndarray:
        """Membership of each point in the union of the half-open cubes."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.all((pts >= 0.0) & (pts < 1.0), axis=1)
        scaled = np.where(inside[:, None], pts, 0.0) * (1 << self.depth)
        keys = encode_keys(np.floor(scaled).astype(np.int64), self.depth, self.dim)
        if not len(self.keys):
            return np.zeros(len(keys), dtype=bool)
        pos = np.clip(np.searchsorted(self.keys, keys), 0, len(self.keys) - 1)
        hit = self.keys[pos] == keys
        return inside & hit

    @classmethod
    def parse(cls, text: str) -> Self:
        lines = content_lines(text)
        if not lines:
            raise ValidationError("missing digital set header")
        first, header_line = lines[0]
        header = parse_header(header_line, ("dim", "depth"))
        dim = header_int(header, "dim", first)
        depth = header_int(header, "depth", first)
        if dim < 1 or depth < 0:
            raise ValidationError(f"line {first}: need dim >= 1 and depth >= 0")
        rows: List[List[int]] = []
        for lineno, line in lines[1:]:
            parts = parse_row(line, lineno, parse_int)
            if len(parts) != dim + 1 or parts[0] != depth:
                raise ValidationError(f"line {lineno}: malformed cube line: {line!r}")
            rows.append(parts[1:])
        if not rows:
            return cls.empty(depth, dim)
        return cls.from_coords(depth, rows)

    def __str__(self) -> str:
        lines = [f"dim={self.dim} depth={self.depth}"]
        lines.extend(
            " ".join(str(v) for v in (self.depth, *row)) for row in self.coords
        )
        return "\n".join(lines) + "\n"


class AtomicMeasure:
    """Finitely many weighted atoms; coincident atoms are merged on construction."""

    __slots__ = ("points", "weights", "unnormalized")

    def __init__(
        self,
        points: np.ndarray | Sequence[Sequence[float]],
        weights: np.ndarray | Sequence[float],
        *,
        unnormalized: bool = False,
    ) -> None:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(weights, dtype=float)
        if pts.ndim != 2 or len(pts) != len(w):
            raise ValidationError("points and weights do not match")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("atom coordinates must be finite")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValidationError("atom weights must be nonnegative")
        keep = w > 0
        pts, w = pts[keep], w[keep]
        if len(pts):
            pts, inverse = np.unique(pts, axis=0, return_inverse=True)
            w = np.bincount(inverse.ravel(), weights=w, minlength=len(pts))
        if not unnormalized and abs(w.sum() - 1.0) > 1e-10:
            raise ValidationError("not probability measures")
        pts.flags.writeable = False
        w.flags.writeable = False
        self.points = pts
        self.weights = w
        self.unnormalized = unnormalized

    @classmethod
    def dirac(cls, x: Sequence[float] | float) -> Self:
        return cls(np.atleast_2d(np.asarray(x, dtype=float)), [1.0])

    @classmethod
    def uniform(cls, points: np.ndarray | Sequence[Sequence[float]]) -> Self:
        pts = np.asarray(points, dtype=float)
        if len(pts) == 0:
            raise ValidationError("empty point list")
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def is_probability(self) -> bool:
        return abs(self.total - 1.0) <= 1e-10

    def __len__(self) -> int:
        return len(self.weights)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AtomicMeasure):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )

    def __repr__(self) -> str:
        return (
            f"AtomicMeasure(dim={self.dim}, atoms={len(self)}, total={self.total:.12g})"
        )

    def mass_in(self, E: DigitalSet) -> float:
        if E.dim != self.dim:
            raise ValidationError("dimension mismatch")
        return float(self.weights[E.contains_points(self.points)].sum())

    @classmethod
    def parse(cls, text: str) -> Self:
        lines = content_lines(text)
        if not lines:
            raise ValidationError("missing measure header")
        first, header_line = lines[0]
        header = parse_header(header_line, ("dim", "atoms"))
        dim = header_int(header, "dim", first)
        count = header_int(header, "atoms", first)
        rows = [parse_row(line, lineno, parse_value) for lineno, line in lines[1:]]
        if len(rows) != count or any(len(r) != dim + 1 for r in rows):
            raise ValidationError("malformed measure file")
        arr = np.asarray(rows, dtype=float).reshape(count, dim + 1)
        w = arr[:, 0]
        if count == 0 or w.sum() <= 0:
            raise ValidationError("not probability measures")
        return cls(arr[:, 1:], w / w.sum())

    def __str__(self) -> str:
        lines = [f"dim={self.dim} atoms={len(self)}"]
        for w, x in zip(self.weights, self.points):
            lines.append(" ".join(format_value(v) for v in (w, *x)))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ProbVector:
    entries: Tuple[float, ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.entries, dtype=float)
        if arr.ndim != 1 or len(arr) == 0 or np.any(arr < 0):
            raise ValidationError("not a probability vector")
        if abs(arr.sum() - 1.0) > ABS_TOL:
            raise ValidationError("not a probability vector")

    @classmethod
    def of(cls, values: Iterable[float]) -> Self:
        return cls(tuple(float(v) for v in values))

    @property
    def m(self) -> int:
        return len(self.entries)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=float)


@dataclass(frozen=True)
class Code:
    digits: Tuple[int, ...]
    alphabet: int = 2

    def __post_init__(self) -> None:
        if self.alphabet < 1 or any(d < 1 or d > self.alphabet for d in self.digits):
            raise ValidationError("digits must lie in 1..m")

    def __len__(self) -> int:
        return len(self.digits)

    def __add__(self, other: "Code") -> "Code":
        return Code(self.digits + other.digits, max(self.alphabet, other.alphabet))


@dataclass(frozen=True)
class Similarity:
    ratio: float
    translation: Tuple[float, ...]
    rotation: Optional[Tuple[Tuple[float, ...], ...]] = None

    def __post_init__(self) -> None:
        if not 0.0 < self.ratio < 1.0:
            raise ValidationError("similarity ratio must lie in (0,1)")
        if self.rotation is not None:
            rot = np.asarray(self.rotation, dtype=float)
            d = len(self.translation)
            if rot.shape != (d, d):
                raise ValidationError("rotation must be an orthogonal d x d matrix")
            if not np.allclose(rot @ rot.T, np.eye(d), atol=1e-9):
                raise ValidationError("rotation must be an orthogonal d x d matrix")

    @property
    def dim(self) -> int:
        return len(self.translation)

    @property
    def is_homothety(self) -> bool:
        return self.rotation is None or np.allclose(self.rotation, np.eye(self.dim))

    def matrix(self) -> np.ndarray:
        if self.rotation is None:
            return np.eye(self.dim)
        return np.asarray(self.rotation, dtype=float)

    def apply(self, x: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return self.ratio * pts @ self.matrix().T + np.asarray(self.translation)


@dataclass(frozen=True)
class IFSystem:
    maps: Tuple[Similarity, ...]
    osc_declared: bool = False

    def __post_init__(self) -> None:
        if len(self.maps) < 2:
            raise ValidationError("an IFS needs at least two maps")
        if len({s.dim for s in self.maps}) != 1:
            raise ValidationError("all maps must share one dimension")
        corners = np.asarray(list(itertools.product((0.0, 1.0), repeat=self.dim)))
        for s in self.maps:
            image = s.apply(corners)
            if image.min() < -1e-12 or image.max() > 1.0 + 1e-12:
                raise ValidationError(
                    "map sends the unit cube outside the ambient domain"
                )
        if self.osc_declared and all(s.is_homothety for s in self.maps):
            lows = [np.asarray(s.translation) for s in self.maps]
            boxes = [(lo, lo + s.ratio) for lo, s in zip(lows, self.maps)]
            for (lo1, hi1), (lo2, hi2) in itertools.combinations(boxes, 2):
                if np.all((lo1 < hi2 - 1e-12) & (lo2 < hi1 - 1e-12)):
                    raise ValidationError(
                        "open set condition fails: open cube images overlap"
                    )

    @classmethod
    def homotheties(
        cls,
        ratios: Sequence[float],
        translations: Sequence[Sequence[float] | float],
        osc_declared: bool = True,
    ) -> Self:
        maps = tuple(
            Similarity(float(r), tuple(float(v) for v in np.atleast_1d(t)))
            for r, t in zip(ratios, translations)
        )
        return cls(maps, osc_declared)

    @property
    def m(self) -> int:
        return len(self.maps)

    @property
    def dim(self) -> int:
        return self.maps[0].dim

    @property
    def ratios(self) -> Tuple[float, ...]:
        return tuple(s.ratio for s in self.maps)

    @classmethod
    def parse(cls, text: str) -> Self:
        lines = content_lines(text)
        if not lines:
            raise ValidationError("missing IFS header")
        first, header_line = lines[0]
        header = parse_header(header_line, ("m", "dim"))
        m, dim = header_int(header, "m", first), header_int(header, "dim", first)
        osc = header.get("osc", "0") in {"1", "true", "yes"}
        if len(lines) - 1 != m:
            raise ValidationError("map count does not match header")
        maps: List[Similarity] = []
        for lineno, line in lines[1:]:
            vals = parse_row(line, lineno, parse_value)
            if len(vals) not in {1 + dim, 1 + dim + dim * dim}:
                raise ValidationError(f"line {lineno}: malformed map line: {line!r}")
            rotation = None
            if len(vals) > 1 + dim:
                flat = vals[1 + dim :]
                rotation = tuple(
                    tuple(flat[i * dim : (i + 1) * dim]) for i in range(dim)
                )
            maps.append(Similarity(vals[0], tuple(vals[1 : 1 + dim]), rotation))
        return cls(tuple(maps), osc)

    def __str__(self) -> str:
        lines = [f"m={self.m} dim={self.dim} osc={int(self.osc_declared)}"]
        for s in self.maps:
            vals = [s.ratio, *s.translation]
            if s.rotation is not None:
                vals.extend(v for row in s.rotation for v in row)
            lines.append(" ".join(repr(float(v)) for v in vals))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SpectrumCurve:
    grid: Tuple[float, ...]
    values: Tuple[float, ...]
    flags: Tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if len(self.grid) != len(self.values):
            raise ValidationError("values length must match grid")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValidationError("grid must be strictly increasing")
        if self.flags and len(self.flags) != len(self.grid):
            raise ValidationError("flags length must match grid")

    def flag(self, i: int) -> str:
        return self.flags[i] if self.flags else ""

    def to_csv(self) -> str:
        lines = ["grid,value,flag"]
        for i, (g, v) in enumerate(zip(self.grid, self.values)):
            lines.append(f"{format_value(g)},{format_value(v)},{self.flag(i)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> Self:
        lines = content_lines(text)
        if lines and lines[0][1].startswith("grid"):
            lines = lines[1:]
        grid, values, flags = [], [], []
        for lineno, line in lines:
            parts = line.split(",")
            if len(parts) < 2:
                raise ValidationError(f"line {lineno}: malformed curve line: {line!r}")
            try:
                grid.append(parse_value(parts[0]))
                values.append(parse_value(parts[1]))
            except ValidationError as e:
                raise ValidationError(f"line {lineno}: {e}") from e
            flags.append(parts[2] if len(parts) > 2 else "")
        return cls(tuple(grid), tuple(values), tuple(flags))


def parse_header(line: str, required: Sequence[str]) -> dict[str, str]:
    header = {}
    for part in line.split():
        key, sep, value = part.partition("=")
        if not sep:
            raise ValidationError(f"malformed header: {line!r}")
        header[key] = value
    missing = [k for k in required if k not in header]
    if missing:
        raise ValidationError(f"header is missing {', '.join(missing)}")
    return header
