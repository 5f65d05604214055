"""
The acceptance suite as a pipeline: every criterion rebuilds its inputs from the
seed, runs the package operations on them and compares with an independent
oracle or a closed form. Reports are deterministic; timings only go to the log.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import (
    coarse_spectrum,
    legendre_transform,
    local_dims,
    lq_spectrum,
    reference_curve,
)
from .errors import NumericError, ValidationError
from .geometry import dyadic_cantor_set, unit_cube, upper_box_dim_estimate
from .ifs import (
    entropy_dim,
    f_of_lambda,
    frequency_schedule,
    g_of_alpha,
    grid_f_of_lambda,
    similarity_dimension,
)
from .measures import (
    MassIndex,
    binomial_cascade,
    check_Ulm,
    geometric_mixture,
    lebesgue_proxy,
    prop41_measure,
    spray_measure,
    ulm_window,
)
from .metric import fm_distance
from .models import AtomicMeasure, DigitalSet, DyadicCube, ProbVector
from .net_measure import NetMeasureQuery, net_measure
from .prescribed import build_prescribed_family, verify_family
from .utils import format_value

LOGGER_ = logging.getLogger(__name__)

Details = Tuple[Tuple[str, str], ...]


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: Details = ()


def _fmt(value: float | int | bool) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format_value(float(value))


def _details(**values: float | int | bool | str) -> Details:
    return tuple((k, v if isinstance(v, str) else _fmt(v)) for k, v in values.items())


def random_digital_set(rng: np.random.Generator, depth: int, dim: int) -> DigitalSet:
    """A nonempty set keeping every cube with one random density."""
    total = 1 << (depth * dim)
    keep = rng.random(total) < rng.uniform(0.05, 0.9)
    if not keep.any():
        keep[rng.integers(total)] = True
    return DigitalSet(depth, dim, np.flatnonzero(keep))


def naive_net_measure(E: DigitalSet, s: float, delta_depth: int) -> float:
    """
    min(|C|^s, Σ over occupied children) evaluated top-down, one cube at a time.

    Shares no code with the vectorized dynamic program it checks.
    """
    D = E.depth
    occupied = [
        {tuple(row) for row in (E.coords >> (D - k)).tolist()} for k in range(D + 1)
    ]

    def value(cube: DyadicCube) -> float:
        if cube.depth == D:
            return cube.size(s)
        children = [ch for ch in cube.children() if ch.coords in occupied[ch.depth]]
        inner = sum(value(ch) for ch in children)
        if cube.depth < delta_depth:
            return inner
        return min(cube.size(s), inner)

    if not E:
        return 0.0
    return value(DyadicCube(0, (0,) * E.dim))


def schedule_set(alpha: float, depth: int) -> DigitalSet:
    """
    Subset of [0, 1) whose binary digits are free where the digit-1 schedule of
    (alpha, 1 - alpha) places a 1 and zero elsewhere. Its box counts grow like
    2^{alpha j}.
    """
    schedule = frequency_schedule(ProbVector.of((alpha, 1.0 - alpha)), depth)
    keys = np.zeros(1, dtype=np.int64)
    for digit in schedule:
        keys = np.concatenate([2 * keys, 2 * keys + 1]) if digit == 1 else 2 * keys
    return DigitalSet(depth, 1, keys)


def _close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(b))


def _net_measure_exactness(rng: np.random.Generator, threads: int) -> CriterionResult:
    worst = 0.0
    failures = 0
    for _ in range(200):
        dim = int(rng.integers(1, 3))
        depth = int(rng.integers(1, 7))
        E = random_digital_set(rng, depth, dim)
        s = float(rng.uniform(0.05, 1.0)) * dim
        delta_depth = int(rng.integers(0, depth + 1))
        dp = net_measure(NetMeasureQuery(E, s, delta_depth))
        oracle = naive_net_measure(E, s, delta_depth)
        worst = max(worst, abs(dp - oracle))
        failures += not _close(dp, oracle, 1e-12)
    return CriterionResult(
        1,
        "net measure exactness",
        failures == 0,
        _details(sets=200, failures=failures, max_error=worst),
    )


def _dimension_comparison(rng: np.random.Generator, threads: int) -> CriterionResult:
    printed = derived = 0
    for _ in range(500):
        dim = int(rng.integers(1, 3))
        depth = int(rng.integers(1, 9 if dim == 1 else 6))
        E = random_digital_set(rng, depth, dim)
        alpha, beta = sorted(float(v) for v in rng.uniform(0.05, 1.0, 2) * dim)
        # printed form at covers of side at most 1
        m_alpha = net_measure(NetMeasureQuery(E, alpha, 0))
        m_beta = net_measure(NetMeasureQuery(E, beta, 0))
        printed += m_alpha < m_beta ** (beta / alpha) - 1e-12
        j0 = int(rng.integers(0, depth + 1))
        m_alpha = net_measure(NetMeasureQuery(E, alpha, j0))
        m_beta = net_measure(NetMeasureQuery(E, beta, j0))
        if m_beta <= 1.0:
            derived += m_alpha < m_beta ** (alpha / beta) - 1e-12 * max(1.0, m_alpha)
    return CriterionResult(
        2,
        "net measure comparison across exponents",
        printed == 0 and derived == 0,
        _details(sets=500, printed_violations=printed, derived_violations=derived),
    )


def _prescribed_family(rng: np.random.Generator, threads: int) -> CriterionResult:
    K = unit_cube(10)
    alphas = (0.3, 0.6, 0.9)
    k_max = 6
    fam = build_prescribed_family(K, alphas, k_max, threads)
    report = verify_family(fam, K)
    values: Dict[str, float | bool] = {"conditions": report.all_passed}
    close = True
    for alpha in alphas:
        E = fam.limit(alpha)
        est = upper_box_dim_estimate(E, 0, K.depth).slope if E else -math.inf
        values[f"box_dim.alpha={format_value(alpha)}"] = est
        close &= abs(est - alpha) <= 0.1
    passed = report.all_passed and close
    return CriterionResult(3, "prescribed family", passed, _details(**values))


def _random_ratios(rng: np.random.Generator, m: int) -> Tuple[float, ...]:
    return tuple(float(v) for v in rng.uniform(0.05, 0.95, m))


def _entropy_identities(rng: np.random.Generator, threads: int) -> CriterionResult:
    systems = [_random_ratios(rng, int(rng.integers(2, 5))) for _ in range(100)]
    lam_error = f_error = g_error = grid_gap = 0.0
    for r in systems:
        s = similarity_dimension(r)
        p = np.asarray(r) ** s
        lam_error = max(lam_error, abs(entropy_dim(p / p.sum(), r) - s))
        f_error = max(
            f_error,
            abs(f_of_lambda(0.0, r, s, cross_check=False)),
            abs(f_of_lambda(1.0, r, s, cross_check=False) - s),
        )
    for r in systems[:50]:
        s = similarity_dimension(r)
        alpha = float(rng.uniform(0.05, 0.95)) * s
        lam = g_of_alpha(alpha, r, s, cross_check=False)
        g_error = max(g_error, abs(f_of_lambda(lam, r, s, cross_check=False) - alpha))
    small = [r for r in systems if len(r) <= 3][:30]
    for r in small:
        lam = float(rng.uniform(0.0, 1.0))
        gap = f_of_lambda(lam, r, cross_check=False) - grid_f_of_lambda(lam, r)
        grid_gap = max(grid_gap, abs(gap))
    passed = (
        lam_error <= 1e-9 and f_error <= 1e-6 and g_error <= 1e-4 and grid_gap <= 1e-4
    )
    return CriterionResult(
        4,
        "entropy identities",
        passed,
        _details(
            lambda_error=lam_error,
            f_endpoint_error=f_error,
            f_of_g_error=g_error,
            grid_gap=grid_gap,
        ),
    )


def _cover_measure_witness(rng: np.random.Generator, threads: int) -> CriterionResult:
    K = dyadic_cantor_set(16)
    alpha = 0.6
    mu0, diag = prop41_measure(K, K, alpha, 6, "auto")
    index = MassIndex(mu0)
    points = np.asarray([a.point for a in diag.atoms])
    sides = np.asarray([a.side for a in diag.atoms])
    bound = np.asarray([a.omega for a in diag.atoms]) * sides**alpha
    masses = index.masses(points, 2.0 * sides)
    short = int(np.sum(masses < bound * (1.0 - 1e-12)))

    centers = K.centers()
    targets = centers[np.linspace(0, len(centers) - 1, 20).astype(int)]
    lowers = [local_dims(mu0, x, 4, 16, index).lower for x in targets]
    worst = max(lowers)
    return CriterionResult(
        5,
        "cover measure witness",
        short == 0 and worst <= 0.7,
        _details(
            atoms=len(diag.atoms),
            ball_bound_failures=short,
            max_lower_dim=worst,
            budget_scale=diag.budget_scale,
        ),
    )


def _spray_membership(rng: np.random.Generator, threads: int) -> CriterionResult:
    K = unit_cube(20)
    s, rho = 0.5, 0.01
    N = [10_000]
    mu = AtomicMeasure.dirac(0.5)
    sprayed, _ = spray_measure(mu, K, s, rho, N, "corrected", threads)
    l, m, _ = ulm_window(N, s)
    result = check_Ulm(sprayed, K, l, m, s, 4, threads)
    distance = fm_distance(mu, sprayed)
    try:
        spray_measure(mu, K, s, rho, N, "printed", threads)
        printed = "feasible"
    except NumericError:
        printed = "infeasible"
    return CriterionResult(
        6,
        "spray and U_{l,m}",
        result.member and distance <= rho + 1e-9,
        _details(
            l=l, m=m, missing=result.missing, distance=distance, printed_rule=printed
        ),
    )


def _random_measure(rng: np.random.Generator, dim: int) -> AtomicMeasure:
    count = int(rng.integers(1, 6))
    w = rng.uniform(0.1, 1.0, count)
    return AtomicMeasure(rng.random((count, dim)), w / w.sum())


def _fortet_mourier(rng: np.random.Generator, threads: int) -> CriterionResult:
    axiom = 0
    for _ in range(1000):
        dim = int(rng.integers(1, 3))
        a, b, c = (_random_measure(rng, dim) for _ in range(3))
        ab, ba = fm_distance(a, b), fm_distance(b, a)
        bc, ac = fm_distance(b, c), fm_distance(a, c)
        axiom += fm_distance(a, a) > 1e-9
        axiom += ab < -1e-9 or abs(ab - ba) > 1e-9
        axiom += ac > ab + bc + 1e-9
    dirac = 0.0
    for _ in range(200):
        dim = int(rng.integers(1, 6))
        x, y = rng.random(dim), rng.random(dim)
        exact = min(2.0, float(np.linalg.norm(x - y)))
        L = fm_distance(AtomicMeasure.dirac(x), AtomicMeasure.dirac(y))
        dirac = max(dirac, abs(L - exact))
    return CriterionResult(
        7,
        "fortet-mourier metric",
        axiom == 0 and dirac <= 1e-9,
        _details(axiom_violations=axiom, dirac_error=dirac),
    )


def _spectrum_machinery(rng: np.random.Generator, threads: int) -> CriterionResult:
    q_grid = np.arange(-100, 301) / 100
    legendre_error = 0.0
    for s in (0.5, 1.0, 1.585):
        curve = reference_curve(s, q_grid)
        for alpha in np.linspace(0.0, s, 101):
            error = abs(legendre_transform(curve, float(alpha)) - alpha)
            legendre_error = max(legendre_error, error)

    qs = np.linspace(0.0, 2.0, 21)
    lq = lq_spectrum(lebesgue_proxy(12), qs, (3, 9), threads)
    lq_error = float(np.max(np.abs(np.asarray(lq.fit.values) - (qs - 1.0))))

    depth = 16
    cascade = binomial_cascade(0.25, depth)
    half = math.ldexp(1.0, -(depth + 1))
    points = (half, 1.0 / 3.0, 1.0 - half)
    expected = (2.0, (2.0 - math.log2(0.75)) / 2.0, -math.log2(0.75))
    index = MassIndex(cascade)
    local_error = max(
        abs(local_dims(cascade, x, 4, 14, index).fit - e)
        for x, e in zip(points, expected)
    )
    return CriterionResult(
        8,
        "spectrum machinery",
        legendre_error <= 1e-12 and lq_error <= 0.1 and local_error <= 0.05,
        _details(
            legendre_error=legendre_error,
            lq_error=lq_error,
            local_dim_error=local_error,
        ),
    )


def _typical_spectrum_shadow(rng: np.random.Generator, threads: int) -> CriterionResult:
    depth = 20
    K = unit_cube(depth)
    alphas = tuple(round(0.1 * k, 1) for k in range(2, 9))
    measures = []
    for alpha in alphas:
        mu, _ = prop41_measure(K, schedule_set(alpha, depth), alpha, 4, "auto")
        measures.append(mu)
    mixed = geometric_mixture(measures)
    curve = coarse_spectrum(mixed, K, alphas, 0.1, (6, 18), "fit", (4, 18), threads)
    pairs = list(zip(alphas, curve.values))
    gaps = [abs(v - a) if v != -math.inf else math.inf for a, v in pairs]
    values = {f"spectrum.alpha={format_value(a)}": v for a, v in pairs}
    return CriterionResult(
        9,
        "typical spectrum shadow",
        max(gaps) <= 0.15,
        _details(max_gap=max(gaps), **values),
    )


CRITERIA: Dict[int, Callable[[np.random.Generator, int], CriterionResult]] = {
    1: _net_measure_exactness,
    2: _dimension_comparison,
    3: _prescribed_family,
    4: _entropy_identities,
    5: _cover_measure_witness,
    6: _spray_membership,
    7: _fortet_mourier,
    8: _spectrum_machinery,
    9: _typical_spectrum_shadow,
}


def parse_criteria(text: Optional[str]) -> List[int]:
    """`all` or a comma list of criterion numbers."""
    if text is None or text.strip() in {"", "all"}:
        return sorted(CRITERIA)
    numbers = []
    for part in text.split(","):
        part = part.strip()
        if not part.isdigit() or int(part) not in CRITERIA:
            raise ValidationError(f"unknown acceptance criterion: {part!r}")
        numbers.append(int(part))
    return sorted(set(numbers))


def run_acceptance(
    criteria: Sequence[int], seed: int = 0, threads: int = 1
) -> List[CriterionResult]:
    results = []
    for number in criteria:
        rng = np.random.default_rng([seed, number])
        start = time.perf_counter()
        result = CRITERIA[number](rng, threads)
        LOGGER_.info(
            "criterion %d (%s): %s in %.1fs",
            number,
            result.name,
            "pass" if result.passed else "fail",
            time.perf_counter() - start,
        )
        results.append(result)
    return results


def format_report(results: Sequence[CriterionResult]) -> str:
    lines = [f"all_passed={int(all(r.passed for r in results))}"]
    for r in results:
        lines.append(f"criterion.{r.number}={'pass' if r.passed else 'fail'}")
        lines.append(f"criterion.{r.number}.name={r.name}")
        lines.extend(f"criterion.{r.number}.{k}={v}" for k, v in r.details)
    return "\n".join(lines) + "\n"
