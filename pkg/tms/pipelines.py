import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .acceptance import format_report, parse_criteria, run_acceptance
from .analysis import (
    coarse_level_set,
    coarse_spectrum,
    legendre_curve,
    local_dim_field,
    local_dims,
    lq_spectrum,
    reference_curve,
)
from .config import ExperimentConfig
from .errors import TMSError, ValidationError
from .geometry import local_upper_box_dim_estimate, upper_box_dim_estimate
from .ifs import (
    code_point,
    entropy_dim,
    f_maximizer,
    frequency_family,
    g_of_alpha,
    ifs_digital_set,
    sample_frequency_codes,
    similarity_dimension,
)
from .measures import (
    blend,
    check_Ulm,
    geometric_mixture,
    perturbed_cover_measure,
    prevalence_segment,
    prop41_measure,
    self_similar_measure,
    spray_measure,
    ulm_window,
)
from .metric import fm_distance, lemma_topo1_frontier, lemma_topo1_probe
from .models import AtomicMeasure, Code, DigitalSet, IFSystem, ProbVector, SpectrumCurve
from .net_measure import NetMeasureQuery, net_measure, optimal_cover
from .prescribed import build_prescribed_family, verify_family
from .utils import format_value

LOGGER_ = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    lines: List[str] = field(default_factory=list)
    files: List[Path] = field(default_factory=list)


class _Writer:
    """Writes files under the run directory, each starting with the op/params header."""

    def __init__(self, cfg: ExperimentConfig, op: str, result: PipelineResult) -> None:
        self.dir = cfg.out_dir
        self.header = f"# op={op} params={cfg.param_hash()}"
        self.result = result

    def write(self, name: str | Path, body: str) -> Path:
        path = Path(name) if Path(name).is_absolute() else self.dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(f"{self.header}\n{body}")
        self.result.files.append(path)
        LOGGER_.info("Wrote %s", path)
        return path


def _read(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"missing file: {path}")
    return p.read_text()


def _set(path: str) -> DigitalSet:
    return DigitalSet.parse(_read(path))


def _measure(path: str) -> AtomicMeasure:
    return AtomicMeasure.parse(_read(path))


def _ifs(cfg: ExperimentConfig) -> IFSystem:
    """The IFS file if given, otherwise homotheties spread evenly over [0, 1]."""
    if cfg.ifs is not None:
        return IFSystem.parse(_read(cfg.ifs))
    cfg.require("ratios")
    r = np.asarray(cfg.ratios, dtype=float)
    gap = (1.0 - r.sum()) / (len(r) - 1) if len(r) > 1 else 0.0
    if gap < 0:
        raise ValidationError("ratios sum above 1: give an IFS file")
    starts = np.concatenate([[0.0], np.cumsum(r[:-1] + gap)])
    return IFSystem.homotheties(tuple(r), tuple(starts))


def _ratios(cfg: ExperimentConfig) -> Tuple[float, ...]:
    if cfg.ratios is not None:
        return cfg.ratios
    return _ifs(cfg).ratios


def _window(cfg: ExperimentConfig, default: Tuple[int, int]) -> Tuple[int, int]:
    return (
        cfg.j_lo if cfg.j_lo is not None else default[0],
        cfg.j_hi if cfg.j_hi is not None else default[1],
    )


def _box_window(cfg: ExperimentConfig, depth: int) -> Tuple[int, int]:
    return (
        cfg.box_lo if cfg.box_lo is not None else 2,
        cfg.box_hi if cfg.box_hi is not None else depth - 2,
    )


def _single(values: Optional[Tuple], name: str):
    if not values:
        raise ValidationError(f"missing config keys: {name}")
    return values[0]


def _kv(key: str, value: float | int | str) -> str:
    if isinstance(value, float):
        return f"{key}={format_value(value)}"
    return f"{key}={value}"


def _netmeasure(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("set", "s", "delta_depth")
    q = NetMeasureQuery(_set(cfg.set), cfg.s, cfg.delta_depth)
    if cfg.cover is not None:
        cert = optimal_cover(q)
        out.write(cfg.cover, str(cert))
        value = cert.value
    else:
        value = net_measure(q)
    res.lines.append(_kv("value", value))
    out.write("netmeasure.txt", "\n".join(res.lines) + "\n")


def _family(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("set", "alphas", "kmax")
    K = _set(cfg.set)
    fam = build_prescribed_family(K, cfg.alphas, cfg.kmax, cfg.thread_count)
    for alpha in fam.alphas:
        for k, stage in enumerate(fam.stages[alpha]):
            out.write(f"E_alpha={format_value(alpha)}_stage={k}.txt", str(stage))
    report = verify_family(fam, K)
    # scales from the unit cube down to the resolution of K
    lo = cfg.box_lo if cfg.box_lo is not None else 0
    hi = cfg.box_hi if cfg.box_hi is not None else max(K.depth, lo + 1)
    lines = [str(report).rstrip("\n")]
    for alpha in fam.alphas:
        E = fam.limit(alpha)
        est = upper_box_dim_estimate(E, lo, hi).slope if E else -math.inf
        lines.append(_kv(f"box_dim.alpha={format_value(alpha)}", est))
        for k, stage in enumerate(fam.log[alpha], start=1):
            lines.append(
                f"trim.alpha={format_value(alpha)}.stage={k}="
                f"kept:{stage.kept},trimmed:{stage.trimmed},faces:{stage.faces}"
            )
    out.write("family_report.txt", "\n".join(lines) + "\n")
    res.lines.append(f"all_passed={int(report.all_passed)}")


def _ifs_dim(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    res.lines.append(_kv("s", similarity_dimension(_ratios(cfg))))


def _ifs_lambda(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("p")
    res.lines.append(_kv("lambda", entropy_dim(ProbVector.of(cfg.p), _ratios(cfg))))


def _ifs_f(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    r = _ratios(cfg)
    if cfg.lam is not None:
        value, p = f_maximizer(cfg.lam, r)
        res.lines.append(_kv("f", value))
        res.lines.append("p_star=" + ",".join(format_value(float(v)) for v in p))
        return
    grid = tuple(float(v) for v in np.linspace(0.0, 1.0, 101))
    curve = SpectrumCurve(grid, tuple(f_maximizer(lam, r)[0] for lam in grid))
    res.lines.append(str(out.write("f_curve.csv", curve.to_csv())))


def _ifs_g(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("alpha")
    res.lines.append(_kv("g", g_of_alpha(cfg.alpha, _ratios(cfg))))


def _ifs_raster(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("depth")
    E = ifs_digital_set(_ifs(cfg), cfg.depth)
    out.write("attractor.txt", str(E))
    res.lines.append(_kv("cubes", len(E)))
    if cfg.depth > 2:
        est = upper_box_dim_estimate(E, *_box_window(cfg, cfg.depth + 2))
        res.lines.append(_kv("box_dim", est.slope))


def _ifs_family(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("alphas", "n", "depth")
    ifs = _ifs(cfg)
    shadows = frequency_family(
        ifs,
        cfg.alphas,
        _single(cfg.n, "n"),
        cfg.depth,
        _box_window(cfg, cfg.depth + 2),
    )
    lines = []
    for sh in shadows:
        key = f"alpha={format_value(sh.alpha)}"
        out.write(f"K_{key}.txt", str(sh.set))
        lines.append(_kv(f"{key}.lambda", sh.lam))
        lines.append(f"{key}.p_star=" + ",".join(format_value(v) for v in sh.p_star))
        lines.append(_kv(f"{key}.box_dim", sh.box_dim))
    out.write("frequency_family.txt", "\n".join(lines) + "\n")
    res.lines.extend(lines)


def _ifs_codes(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("p", "n")
    codes = sample_frequency_codes(
        ProbVector.of(cfg.p), _single(cfg.n, "n"), cfg.count or 1, cfg.seed or 0
    )
    body = "\n".join("".join(str(d) for d in c.digits) for c in codes) + "\n"
    out.write("codes.txt", body)
    res.lines.append(_kv("codes", len(codes)))


def _ifs_point(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("code")
    ifs = _ifs(cfg)
    cp = code_point(ifs, Code(cfg.code, ifs.m))
    res.lines.append("point=" + ",".join(format_value(float(v)) for v in cp.point))
    res.lines.append(_kv("diameter", cp.diameter))


def _budget_scale(cfg: ExperimentConfig) -> float | str:
    if cfg.budget_scale is None:
        return 1.0
    if cfg.budget_scale == "auto":
        return "auto"
    try:
        return float(cfg.budget_scale)
    except ValueError as e:
        raise ValidationError(f"not a number: {cfg.budget_scale!r}") from e


def _construct_prop41(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("set", "alpha", "n_max")
    K = _set(cfg.set)
    E = _set(cfg.target) if cfg.target is not None else K
    mu0, diag = prop41_measure(K, E, cfg.alpha, cfg.n_max, _budget_scale(cfg))
    out.write("prop41.txt", str(mu0))
    rows = ["level,delta_depth,budget,sigma,rho,omega,cubes"]
    for lv in diag.levels:
        rows.append(
            f"{lv.level},{lv.delta_depth},"
            f"{format_value(lv.budget)},{format_value(lv.sigma)},"
            f"{format_value(lv.rho)},{format_value(lv.omega)},{lv.cubes}"
        )
    out.write("prop41_levels.csv", "\n".join(rows) + "\n")
    res.lines.append(_kv("atoms", len(mu0)))
    res.lines.append(_kv("budget_scale", diag.budget_scale))
    res.lines.append(_kv("tail_bound", diag.tail_bound))


def _counts(cfg: ExperimentConfig, atoms: int) -> List[int]:
    cfg.require("n")
    if len(cfg.n) == 1:
        return [cfg.n[0]] * atoms
    return list(cfg.n)


def _construct_spray(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("mu", "set", "s", "rho")
    mu = _measure(_single(cfg.mu, "mu"))
    rule = cfg.radius_rule or "corrected"
    N = _counts(cfg, len(mu))
    sprayed, reports = spray_measure(
        mu, _set(cfg.set), cfg.s, cfg.rho, N, rule, cfg.thread_count
    )
    out.write("spray.txt", str(sprayed))
    rows = ["center,count,gap_bound,min_gap,witness_radius"]
    for rep in reports:
        center = " ".join(format_value(v) for v in rep.center)
        rows.append(
            f"{center},{rep.count},{format_value(rep.gap_bound)},"
            f"{format_value(rep.min_gap)},{format_value(rep.witness_radius)}"
        )
    out.write("spray_report.csv", "\n".join(rows) + "\n")
    l, m, _ = ulm_window(N, cfg.s, rule)
    res.lines.extend([_kv("atoms", len(sprayed)), _kv("l", l), _kv("m", m)])


def _construct_mixture(
    cfg: ExperimentConfig, out: _Writer, res: PipelineResult
) -> None:
    cfg.require("mu")
    mixed = geometric_mixture([_measure(p) for p in cfg.mu])
    out.write("mixture.txt", str(mixed))
    res.lines.append(_kv("atoms", len(mixed)))


def _construct_blend(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("nu", "mu", "t")
    mixed = blend(_measure(cfg.nu), _measure(_single(cfg.mu, "mu")), cfg.t)
    out.write("blend.txt", str(mixed))
    res.lines.append(_kv("atoms", len(mixed)))


def _construct_perturbed(
    cfg: ExperimentConfig, out: _Writer, res: PipelineResult
) -> None:
    cfg.require("nu", "mu")
    mixed, factor = perturbed_cover_measure(
        _measure(cfg.nu), _measure(_single(cfg.mu, "mu"))
    )
    out.write("perturbed.txt", str(mixed))
    res.lines.extend([_kv("atoms", len(mixed)), _kv("factor", factor)])


def _construct_segment(
    cfg: ExperimentConfig, out: _Writer, res: PipelineResult
) -> None:
    cfg.require("mu", "x", "t")
    seg = prevalence_segment(_measure(_single(cfg.mu, "mu")), cfg.x, cfg.t)
    out.write("segment.txt", str(seg))
    res.lines.append(_kv("atoms", len(seg)))


def _construct_ulm(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("mu", "set", "s")
    mu = _measure(_single(cfg.mu, "mu"))
    if cfg.l is None or cfg.m is None:
        rule = cfg.radius_rule or "corrected"
        l, m, _ = ulm_window(_counts(cfg, len(mu)), cfg.s, rule)
    else:
        l, m = cfg.l, cfg.m
    result = check_Ulm(
        mu, _set(cfg.set), l, m, cfg.s, cfg.r_grid or 16, cfg.thread_count
    )
    rows = ["point,witness"]
    for x, w in zip(result.points, result.witnesses):
        point = " ".join(format_value(float(v)) for v in x)
        rows.append(f"{point},{format_value(float(w))}")
    out.write("ulm.csv", "\n".join(rows) + "\n")
    res.lines.extend(
        [
            _kv("member", int(result.member)),
            _kv("missing", result.missing),
            _kv("l", l),
            _kv("m", m),
        ]
    )


def _construct_selfsimilar(
    cfg: ExperimentConfig, out: _Writer, res: PipelineResult
) -> None:
    cfg.require("p", "depth")
    mu = self_similar_measure(_ifs(cfg), ProbVector.of(cfg.p), cfg.depth)
    out.write("selfsimilar.txt", str(mu))
    res.lines.append(_kv("atoms", len(mu)))


def _analyze_localdim(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("mu", "j_lo", "j_hi")
    mu = _measure(_single(cfg.mu, "mu"))
    if cfg.x is not None:
        est = local_dims(mu, cfg.x, cfg.j_lo, cfg.j_hi)
        res.lines.extend(
            [
                _kv("lower", est.lower),
                _kv("upper", est.upper),
                _kv("fit", est.fit),
                _kv("ratio_lower", est.ratio_lower),
                _kv("ratio_upper", est.ratio_upper),
                f"flag={est.flag}",
            ]
        )
        return
    cfg.require("set")
    fld = local_dim_field(
        mu, _set(cfg.set).centers(), cfg.j_lo, cfg.j_hi, cfg.thread_count
    )
    rows = ["point,lower,upper,fit"]
    for x, lo, up, fit in zip(fld.points, fld.lower, fld.upper, fld.fit):
        fields = [" ".join(format_value(float(v)) for v in x)]
        fields.extend(format_value(float(v)) for v in (lo, up, fit))
        rows.append(",".join(fields))
    res.lines.append(str(out.write("localdim.csv", "\n".join(rows) + "\n")))


def _analyze_levelset(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("mu", "set", "alpha", "epsilon", "j_lo", "j_hi")
    K = _set(cfg.set)
    level = coarse_level_set(
        _measure(_single(cfg.mu, "mu")),
        K,
        cfg.alpha,
        cfg.epsilon,
        (cfg.j_lo, cfg.j_hi),
        cfg.mode or "fit",
        cfg.thread_count,
    )
    out.write("levelset.txt", str(level))
    res.lines.append(_kv("cubes", len(level)))


def _analyze_spectrum(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("mu", "set", "alpha_grid", "epsilon", "j_lo", "j_hi")
    K = _set(cfg.set)
    curve = coarse_spectrum(
        _measure(_single(cfg.mu, "mu")),
        K,
        cfg.alpha_grid,
        cfg.epsilon,
        (cfg.j_lo, cfg.j_hi),
        cfg.mode or "fit",
        _box_window(cfg, K.depth),
        cfg.thread_count,
    )
    res.lines.append(str(out.write("spectrum.csv", curve.to_csv())))


def _analyze_lq(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("mu", "q_grid", "j_lo", "j_hi")
    spec = lq_spectrum(
        _measure(_single(cfg.mu, "mu")),
        cfg.q_grid,
        (cfg.j_lo, cfg.j_hi),
        cfg.thread_count,
    )
    res.lines.append(str(out.write("lq.csv", spec.fit.to_csv())))
    res.lines.append(str(out.write("lq_lower.csv", spec.lower.to_csv())))


def _analyze_legendre(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("curve", "alpha_grid")
    curve = legendre_curve(SpectrumCurve.parse(_read(cfg.curve)), cfg.alpha_grid)
    res.lines.append(str(out.write("legendre.csv", curve.to_csv())))


def _analyze_reference(
    cfg: ExperimentConfig, out: _Writer, res: PipelineResult
) -> None:
    cfg.require("s", "q_grid")
    curve = reference_curve(cfg.s, cfg.q_grid)
    res.lines.append(str(out.write("reference.csv", curve.to_csv())))


def _analyze_boxdim(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("set")
    E = _set(cfg.set)
    lo, hi = _window(cfg, (0, E.depth))
    est = upper_box_dim_estimate(E, lo, hi)
    res.lines.extend([_kv("slope", est.slope), _kv("limsup", est.limsup)])
    if cfg.probe_depth is not None:
        window = (lo, hi) if cfg.j_lo is not None else None
        local = local_upper_box_dim_estimate(E, cfg.probe_depth, window)
        res.lines.append(_kv("local_slope", local.slope))


def _dist_fm(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("mu", "nu")
    L = fm_distance(_measure(_single(cfg.mu, "mu")), _measure(cfg.nu))
    res.lines.append(_kv("L", L))


def _dist_probe(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("mu", "nu", "set", "gamma")
    probe = lemma_topo1_probe(
        _measure(_single(cfg.mu, "mu")), _measure(cfg.nu), _set(cfg.set), cfg.gamma
    )
    res.lines.extend([_kv("excess", probe.excess), _kv("L", probe.distance)])


def _dist_frontier(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    cfg.require("mu", "set", "gamma", "shifts")
    frontier = lemma_topo1_frontier(
        _measure(_single(cfg.mu, "mu")), _set(cfg.set), cfg.gamma, cfg.shifts
    )
    rows = ["shift,distance,excess"]
    rows.extend(
        ",".join(format_value(v) for v in (p.shift, p.distance, p.excess))
        for p in frontier
    )
    res.lines.append(str(out.write("frontier.csv", "\n".join(rows) + "\n")))


def _acceptance(cfg: ExperimentConfig, out: _Writer, res: PipelineResult) -> None:
    results = run_acceptance(parse_criteria(cfg.op), cfg.seed or 0, cfg.thread_count)
    report = format_report(results)
    out.write("acceptance_report.txt", report)
    res.lines.extend(report.rstrip("\n").splitlines())


Step = Callable[[ExperimentConfig, _Writer, PipelineResult], None]

PIPELINES: Dict[str, Dict[Optional[str], Step]] = {
    "netmeasure": {None: _netmeasure},
    "family": {None: _family},
    "ifs": {
        "dim": _ifs_dim,
        "lambda": _ifs_lambda,
        "f": _ifs_f,
        "g": _ifs_g,
        "raster": _ifs_raster,
        "family": _ifs_family,
        "codes": _ifs_codes,
        "point": _ifs_point,
    },
    "construct": {
        "prop41": _construct_prop41,
        "spray": _construct_spray,
        "mixture": _construct_mixture,
        "blend": _construct_blend,
        "perturbed": _construct_perturbed,
        "segment": _construct_segment,
        "ulm": _construct_ulm,
        "selfsimilar": _construct_selfsimilar,
    },
    "analyze": {
        "localdim": _analyze_localdim,
        "levelset": _analyze_levelset,
        "spectrum": _analyze_spectrum,
        "lq": _analyze_lq,
        "legendre": _analyze_legendre,
        "reference": _analyze_reference,
        "boxdim": _analyze_boxdim,
    },
    "dist": {
        "fm": _dist_fm,
        "probe": _dist_probe,
        "frontier": _dist_frontier,
    },
    "acceptance": {None: _acceptance},
}


def _step(cfg: ExperimentConfig) -> Tuple[str, Step]:
    cfg.require("pipeline")
    ops = PIPELINES.get(cfg.pipeline)
    if ops is None:
        raise ValidationError(f"unknown pipeline: {cfg.pipeline}")
    if None in ops:
        return cfg.pipeline, ops[None]
    if cfg.op not in ops:
        raise ValidationError(
            f"unknown {cfg.pipeline} op: {cfg.op} (expected one of {', '.join(ops)})"
        )
    return f"{cfg.pipeline}.{cfg.op}", ops[cfg.op]


def execute(cfg: ExperimentConfig) -> PipelineResult:
    name, step = _step(cfg)
    res = PipelineResult()
    out = _Writer(cfg, name, res)
    out.dir.mkdir(parents=True, exist_ok=True)
    out.write("config.resolved", cfg.resolved())
    LOGGER_.info("Running %s into %s", name, out.dir)
    step(cfg, out, res)
    LOGGER_.info("Finished %s: %d files", name, len(res.files))
    return res


def run_experiment(cfg: ExperimentConfig) -> int:
    """Execute one pipeline and map its outcome to an exit status."""
    try:
        result = execute(cfg)
    except TMSError as e:
        LOGGER_.error("%s failed: %s", cfg.pipeline, e)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    for line in result.lines:
        print(line)
    return 0
