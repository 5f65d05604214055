import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import NoTrimmingNeeded, ValidationError
from .geometry import upper_box_dim_estimate
from .models import DigitalSet, DyadicCube, decode_keys
from .net_measure import NetMeasureQuery, cell_net_measures, net_measure
from .utils import ABS_TOL, format_value, parallel_map

LOGGER_ = logging.getLogger(__name__)


@dataclass(frozen=True)
class Slab:
    """I_{|u}: the part of a cube below axis-1 level a_1 + u, u on a 2^{-r} grid."""

    cube: DyadicCube
    steps: int
    resolution: int

    def __post_init__(self) -> None:
        if self.resolution < self.cube.depth:
            raise ValidationError("u not on face grid")
        if not 0 <= self.steps <= 1 << (self.resolution - self.cube.depth):
            raise ValidationError("u not on face grid")

    @classmethod
    def from_u(cls, cube: DyadicCube, u: float, resolution: int) -> "Slab":
        scaled = u * (1 << resolution)
        steps = round(scaled)
        if abs(scaled - steps) > 1e-9 or steps < 0:
            raise ValidationError("u not on face grid")
        return cls(cube, steps, resolution)

    @property
    def u(self) -> float:
        return math.ldexp(self.steps, -self.resolution)

    @property
    def is_face(self) -> bool:
        return self.steps == 0

    @property
    def is_whole(self) -> bool:
        return self.steps == 1 << (self.resolution - self.cube.depth)


@dataclass(frozen=True)
class AdmissibleSlab:
    slab: Slab
    value: float
    trimmed_to_face: bool


def slab_restrict(E: DigitalSet, slab: Slab) -> DigitalSet:
    if slab.resolution > E.depth or slab.cube.dim != E.dim:
        raise ValidationError("u not on face grid")
    inside = E.within(slab.cube)
    if not inside:
        return inside
    # upper axis-1 edges of the cubes and the cut level, both in units of 2^{-E.depth}
    edges = inside.coords[:, 0] + 1
    cut = (slab.cube.coords[0] << (E.depth - slab.cube.depth)) + (
        slab.steps << (E.depth - slab.resolution)
    )
    return DigitalSet(E.depth, E.dim, inside.keys[edges <= cut])


def largest_admissible_u(
    E: DigitalSet,
    I: DyadicCube,
    alpha: float,
    threshold: float,
    cover_depth: int,
    resolution: Optional[int] = None,
) -> AdmissibleSlab:
    """
    Largest quantized u with M^alpha of E ∩ I_{|u} (covers of depth >= cover_depth)
    at most `threshold`. The value is nondecreasing in u, so bisection over the
    face grid finds it.
    """
    R = E.depth if resolution is None else resolution
    inside = E.within(I)
    whole = Slab(I, 1 << (R - I.depth), R)

    def value(steps: int) -> float:
        part = slab_restrict(inside, Slab(I, steps, R))
        return net_measure(NetMeasureQuery(part, alpha, cover_depth)) if part else 0.0

    total = value(whole.steps)
    if total <= threshold + ABS_TOL:
        raise NoTrimmingNeeded("no trimming needed")

    lo, hi = 0, whole.steps
    lo_value = 0.0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        v = value(mid)
        if v <= threshold + ABS_TOL:
            lo, lo_value = mid, v
        else:
            hi = mid
    if lo == 0:
        LOGGER_.warning("cube %s trimmed to face at alpha=%g", I, alpha)
    return AdmissibleSlab(Slab(I, lo, R), lo_value, lo == 0)


@dataclass
class StageLog:
    kept: int = 0
    trimmed: int = 0
    faces: int = 0


@dataclass
class PrescribedFamily:
    alphas: Tuple[float, ...]
    stages: Dict[float, List[DigitalSet]]
    log: Dict[float, List[StageLog]] = field(default_factory=dict)

    @property
    def k_max(self) -> int:
        return len(next(iter(self.stages.values()))) - 1

    def limit(self, alpha: float) -> DigitalSet:
        return self.stages[alpha][-1]


def _trim_stage(
    E: DigitalSet, alpha: float, k: int, threads: int
) -> Tuple[DigitalSet, StageLog]:
    """One induction step: E_alpha^{k+1} from E_alpha^k."""
    threshold = 2.0 ** (-alpha * k)
    cells, values = cell_net_measures(E, alpha, k + 1, k)
    over = values > threshold + ABS_TOL
    stage = StageLog(kept=int((~over).sum()))
    if not over.any():
        return E, stage

    rows = decode_keys(cells[over], k, E.dim)
    cubes = [DyadicCube(k, tuple(int(c) for c in row)) for row in rows]
    results = parallel_map(
        lambda cube: largest_admissible_u(E, cube, alpha, threshold, k + 1),
        cubes,
        threads,
    )
    drop = []
    for res in results:
        stage.trimmed += 1
        stage.faces += res.trimmed_to_face
        inside = E.within(res.slab.cube)
        drop.append(inside.difference(slab_restrict(inside, res.slab)).keys)
    return DigitalSet(E.depth, E.dim, np.setdiff1d(E.keys, np.concatenate(drop))), stage


def build_prescribed_family(
    K: DigitalSet, alphas: Sequence[float], k_max: int, threads: int = 1
) -> PrescribedFamily:
    alphas = tuple(float(a) for a in alphas)
    if not alphas or any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValidationError("alphas must be strictly increasing")
    if alphas[0] <= 0 or alphas[-1] > K.dim:
        raise ValidationError("invalid exponent/depth")
    if k_max < 0 or k_max + 1 > K.depth:
        raise ValidationError("insufficient resolution")
    if not K:
        raise ValidationError("empty target")
    box = upper_box_dim_estimate(K, 0, K.depth).slope if K.depth > 0 else 0.0
    for a in alphas:
        if a >= box - ABS_TOL:
            LOGGER_.warning(
                "alpha=%g is not below the box dimension estimate %g", a, box
            )

    stages: Dict[float, List[DigitalSet]] = {a: [K] for a in alphas}
    log: Dict[float, List[StageLog]] = {a: [] for a in alphas}
    for k in range(k_max):
        larger: Optional[DigitalSet] = None
        for a in reversed(alphas):
            nxt, stage = _trim_stage(stages[a][-1], a, k, threads)
            if larger is not None:
                # (A): u_alpha <= u_beta inside every cube
                nxt = nxt.intersection(larger)
            stages[a].append(nxt)
            log[a].append(stage)
            larger = nxt
        LOGGER_.info(
            "stage %d done: %s",
            k + 1,
            ", ".join(f"alpha={a:g} cubes={len(stages[a][-1])}" for a in alphas),
        )
    return PrescribedFamily(alphas, stages, log)


@dataclass(frozen=True)
class ConditionCheck:
    condition: str
    alpha: float
    stage: int
    passed: bool
    cube: Optional[DyadicCube] = None


@dataclass
class FamilyReport:
    checks: List[ConditionCheck]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def passed(self, condition: str) -> bool:
        return all(c.passed for c in self.checks if c.condition == condition)

    def failures(self) -> List[ConditionCheck]:
        return [c for c in self.checks if not c.passed]

    def __str__(self) -> str:
        lines = [f"all_passed={int(self.all_passed)}"]
        for c in self.checks:
            key = f"{c.condition}.alpha={format_value(c.alpha)}.stage={c.stage}"
            lines.append(f"{key}={'pass' if c.passed else 'fail'}")
            if c.cube is not None:
                lines.append(f"{key}.cube={c.cube}")
        return "\n".join(lines) + "\n"


def _first_cube(keys: np.ndarray, depth: int, dim: int) -> Optional[DyadicCube]:
    if not len(keys):
        return None
    row = decode_keys(keys[:1], depth, dim)[0]
    return DyadicCube(depth, tuple(int(c) for c in row))


def _check_slabs(E: DigitalSet, K: DigitalSet, k: int) -> Optional[DyadicCube]:
    """The first depth-(k-1) cube I where E ∩ I is neither empty nor K ∩ I_{|u}."""
    if not E.issubset(K):
        return _first_cube(E.difference(K).keys, E.depth, E.dim)
    shift = K.depth - (k - 1)
    cell_coords = K.coords >> shift
    cells, cell_of = np.unique(cell_coords, axis=0, return_inverse=True)
    cell_of = cell_of.ravel()
    in_E = np.isin(K.keys, E.keys, assume_unique=True)
    edges = K.coords[:, 0] + 1
    reach = np.full(len(cells), -1, dtype=np.int64)
    np.maximum.at(reach, cell_of[in_E], edges[in_E])
    expected = edges <= reach[cell_of]
    bad = np.unique(cell_of[expected != in_E])
    if not len(bad):
        return None
    return DyadicCube(k - 1, tuple(int(c) for c in cells[bad[0]]))


def verify_family(fam: PrescribedFamily, K: DigitalSet) -> FamilyReport:
    checks: List[ConditionCheck] = []
    for lo, hi in zip(fam.alphas, fam.alphas[1:]):
        for k, (a, b) in enumerate(zip(fam.stages[lo], fam.stages[hi])):
            extra = a.difference(b)
            cube = _first_cube(extra.keys, a.depth, a.dim)
            checks.append(ConditionCheck("A", lo, k, not extra, cube))

    for alpha in fam.alphas:
        chain = fam.stages[alpha]
        for k in range(1, len(chain)):
            cube = _check_slabs(chain[k], K, k)
            checks.append(ConditionCheck("B", alpha, k, cube is None, cube))

            extra = chain[k].difference(chain[k - 1])
            cube = _first_cube(extra.keys, K.depth, K.dim)
            checks.append(ConditionCheck("C", alpha, k, not extra, cube))

            bound = 2.0 ** (-alpha * (k - 1))
            cube = None
            if chain[k]:
                cells, values = cell_net_measures(chain[k], alpha, k, k - 1)
                over = cells[values > bound + ABS_TOL]
                cube = _first_cube(over, k - 1, K.dim)
            checks.append(ConditionCheck("D", alpha, k, cube is None, cube))
    report = FamilyReport(checks)
    LOGGER_.info(
        "family verification: %d checks, %d failures",
        len(checks),
        len(report.failures()),
    )
    return report
