import hashlib
import math
from multiprocessing.pool import ThreadPool
from typing import Any, Callable, Dict, List, Sequence, Tuple, TypeVar

import numpy as np
from scipy import stats

from .errors import ValidationError

T = TypeVar("T")
R = TypeVar("R")

ABS_TOL = 1e-12


def split_list(input_list: List[T], n: int) -> List[List[T]]:
    """
    Split a list into sublists of length n

    Parameters:
        input_list: The input list
        n: The length of each sublist
    """
    if n <= 0:
        raise ValidationError("Parameter n must be a positive integer")

    return [input_list[i : i + n] for i in range(0, len(input_list), n)]


def parallel_map(
    fn: Callable[[T], R], items: Sequence[T], threads: int = 1
) -> List[R]:
    """
    Apply fn to every item, optionally on a thread pool.

    The result order is the input order whatever the thread count, so callers
    get identical outputs for identical inputs.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    chunks = split_list(items, max(1, math.ceil(len(items) / threads)))
    with ThreadPool(min(threads, len(chunks))) as pool:
        results = pool.map(lambda chunk: [fn(item) for item in chunk], chunks)
    return [r for chunk in results for r in chunk]


def param_hash(**params: Any) -> str:
    text = ";".join(f"{k}={params[k]!r}" for k in sorted(params))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def format_value(value: float) -> str:
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))


def parse_value(text: str) -> float:
    text = text.strip()
    if text in {"inf", "+inf"}:
        return math.inf
    if text == "-inf":
        return -math.inf
    try:
        return float(text)
    except ValueError as e:
        raise ValidationError(f"not a number: {text!r}") from e


def parse_int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError as e:
        raise ValidationError(f"not an integer: {text!r}") from e


def parse_row(line: str, lineno: int, parse: Callable[[str], T]) -> List[T]:
    """Whitespace-separated fields of one file line; errors carry the line number."""
    try:
        return [parse(v) for v in line.split()]
    except ValidationError as e:
        raise ValidationError(f"line {lineno}: {e}") from e


def header_int(header: Dict[str, str], key: str, lineno: int = 1) -> int:
    try:
        return parse_int(header[key])
    except ValidationError as e:
        raise ValidationError(f"line {lineno}: {key}: {e}") from e


def parse_float_list(text: str) -> List[float]:
    return [parse_value(part) for part in text.split(",") if part.strip()]


def content_lines(text: str) -> List[Tuple[int, str]]:
    """Non-blank, non-comment lines with their 1-based line numbers in the file."""
    stripped = ((n, line.strip()) for n, line in enumerate(text.splitlines(), start=1))
    return [(n, line) for n, line in stripped if line and not line.startswith("#")]


def lsq_slope(x: Sequence[float], y: Sequence[float]) -> float:
    xs = np.asarray(x, dtype=float)
    if len(xs) < 2:
        return math.nan
    return float(stats.linregress(xs, np.asarray(y, dtype=float)).slope)


def two_point_slopes(x: Sequence[float], y: Sequence[float]) -> np.ndarray:
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    return np.diff(ys) / np.diff(xs)


def window_radii(j_lo: int, j_hi: int) -> Tuple[np.ndarray, np.ndarray]:
    if j_lo >= j_hi:
        raise ValidationError("window too small")
    js = np.arange(j_lo, j_hi + 1)
    return js, np.ldexp(1.0, -js)
