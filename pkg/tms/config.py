import dataclasses
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Self, Tuple

from dotenv import dotenv_values

from .errors import ValidationError
from .utils import format_value, param_hash, parse_float_list, parse_value

LOGGER_ = logging.getLogger(__name__)

# flag spellings that differ from the field they set
ALIASES = {"lambda": "lam", "k_max": "kmax"}


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError as e:
        raise ValidationError(f"not an integer: {text!r}") from e


def _ints(text: str) -> Tuple[int, ...]:
    return tuple(_int(part) for part in text.split(",") if part.strip())


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(parse_float_list(text))


def _strings(text: str) -> Tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _key(parse: Callable[[str], Any]) -> Any:
    return field(default=None, metadata={"parse": parse})


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Flat key-value description of one pipeline run.

    Files hold `key=value` lines with `#` comments; every key maps to one field,
    unknown keys are rejected and values are typed on load.
    """

    pipeline: Optional[str] = _key(str)
    op: Optional[str] = _key(str)
    set: Optional[str] = _key(str)
    target: Optional[str] = _key(str)
    ifs: Optional[str] = _key(str)
    mu: Optional[Tuple[str, ...]] = _key(_strings)
    nu: Optional[str] = _key(str)
    curve: Optional[str] = _key(str)
    out: Optional[str] = _key(str)
    cover: Optional[str] = _key(str)
    s: Optional[float] = _key(parse_value)
    delta_depth: Optional[int] = _key(_int)
    alphas: Optional[Tuple[float, ...]] = _key(_floats)
    kmax: Optional[int] = _key(_int)
    ratios: Optional[Tuple[float, ...]] = _key(_floats)
    p: Optional[Tuple[float, ...]] = _key(_floats)
    lam: Optional[float] = _key(parse_value)
    alpha: Optional[float] = _key(parse_value)
    depth: Optional[int] = _key(_int)
    n_max: Optional[int] = _key(_int)
    rho: Optional[float] = _key(parse_value)
    n: Optional[Tuple[int, ...]] = _key(_ints)
    t: Optional[float] = _key(parse_value)
    l: Optional[int] = _key(_int)
    m: Optional[int] = _key(_int)
    r_grid: Optional[int] = _key(_int)
    x: Optional[Tuple[float, ...]] = _key(_floats)
    code: Optional[Tuple[int, ...]] = _key(_ints)
    count: Optional[int] = _key(_int)
    j_lo: Optional[int] = _key(_int)
    j_hi: Optional[int] = _key(_int)
    probe_depth: Optional[int] = _key(_int)
    q_grid: Optional[Tuple[float, ...]] = _key(_floats)
    alpha_grid: Optional[Tuple[float, ...]] = _key(_floats)
    shifts: Optional[Tuple[float, ...]] = _key(_floats)
    epsilon: Optional[float] = _key(parse_value)
    mode: Optional[str] = _key(str)
    gamma: Optional[float] = _key(parse_value)
    seed: Optional[int] = _key(_int)
    threads: Optional[int] = _key(_int)
    budget_scale: Optional[str] = _key(str)
    radius_rule: Optional[str] = _key(str)
    box_lo: Optional[int] = _key(_int)
    box_hi: Optional[int] = _key(_int)

    @classmethod
    def keys(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def from_mapping(cls, values: Mapping[str, Optional[str]]) -> Self:
        parsers = {f.name: f.metadata["parse"] for f in dataclasses.fields(cls)}
        typed: Dict[str, Any] = {}
        for raw_key, raw in values.items():
            key = raw_key.strip().lower().replace("-", "_")
            key = ALIASES.get(key, key)
            if key not in parsers:
                raise ValidationError(f"unknown config key: {raw_key}")
            if raw is None or not str(raw).strip():
                continue
            typed[key] = parsers[key](str(raw).strip())
        return cls(**typed)

    @classmethod
    def load(cls, path: str | Path) -> Self:
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"missing file: {path}")
        LOGGER_.info("Loading config %s", path)
        return cls.from_mapping(dotenv_values(path))

    def merged(self, **overrides: Any) -> Self:
        """A copy with every non-None override applied."""
        given = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **given)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ValidationError(f"missing config keys: {', '.join(missing)}")

    @property
    def out_dir(self) -> Path:
        return Path(self.out or os.getenv("TMS_OUT_DIR") or "out")

    @property
    def thread_count(self) -> int:
        if self.threads is not None:
            return max(1, self.threads)
        return max(1, _int(os.getenv("TMS_THREADS") or "1"))

    def params(self) -> Dict[str, Any]:
        """Every set key except where outputs go and how many threads compute them."""
        return {
            k: v
            for k, v in dataclasses.asdict(self).items()
            if v is not None and k not in {"out", "threads"}
        }

    def param_hash(self) -> str:
        return param_hash(**self.params())

    def resolved(self) -> str:
        lines = []
        for key in sorted(self.keys()):
            value = getattr(self, key)
            if key == "out":
                value = str(self.out_dir)
            elif key == "threads":
                value = self.thread_count
            lines.append(f"{key}={_render(value)}")
        return "\n".join(lines) + "\n"


def _render(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ",".join(_render(v) for v in value)
    if isinstance(value, float):
        return format_value(value)
    return str(value)
