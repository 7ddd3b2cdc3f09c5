"""Correlation statistics: mean, tie-averaged ranks, Pearson, Spearman, Quadrant.

Scalar functions operate on one pair of series. The ``*_rows`` kernels
operate on a matrix of series (one per row) against a single reference
series and are what the voxel engine uses; the scalar functions are thin
wrappers around the kernels, so a scalar call on a voxel's series and the
engine's value for that voxel are bitwise identical.

Undefined results (a zero-variance input, or a Quadrant sum with no
non-zero sign products) are returned as :class:`Undefined` instances
rather than NaN so that the reason survives.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Set, Tuple, Union

import numpy as np

EPS = np.finfo(np.float64).eps
CLAMP_ULPS = 4


class StatsError(ValueError):
    pass


class LengthMismatch(StatsError):
    pass


class TooShort(StatsError):
    pass


class ElementAbsent(StatsError):
    pass


class NonFiniteInput(StatsError):
    pass


class ConsistencyError(ArithmeticError):
    """A computed coefficient fell outside [-1, 1] by more than rounding."""


class UndefinedReason(str, enum.Enum):
    ZERO_VARIANCE_LEFT = "zero_variance_left"
    ZERO_VARIANCE_RIGHT = "zero_variance_right"
    NO_SIGN_PRODUCTS = "no_sign_products"


@dataclass(frozen=True)
class Undefined:
    reason: UndefinedReason

    def __bool__(self):
        return False


CorrelationValue = Union[float, Undefined]

# integer codes used by the row kernels; 0 means defined
DEFINED = 0
_REASON_CODES = {
    1: UndefinedReason.ZERO_VARIANCE_LEFT,
    2: UndefinedReason.ZERO_VARIANCE_RIGHT,
    3: UndefinedReason.NO_SIGN_PRODUCTS,
}


def reason_for(code: int) -> UndefinedReason:
    return _REASON_CODES[int(code)]


def is_defined(value: CorrelationValue) -> bool:
    return not isinstance(value, Undefined)


def as_series(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise StatsError(f"series must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("series contains NaN or infinity")
    return arr


def _pair(a, b) -> Tuple[np.ndarray, np.ndarray]:
    a, b = as_series(a), as_series(b)
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    if a.size < 2:
        raise TooShort(f"need at least 2 samples, got {a.size}")
    return a, b


# ---------------------------------------------------------------------------
# definitions from the rank function, one function per helper

def mean(a) -> float:
    a = as_series(a)
    if a.size == 0:
        raise TooShort("mean of an empty series")
    return float(_row_means(a[None, :])[0])


def sort(a) -> np.ndarray:
    return np.sort(as_series(a), kind="stable")


def count(x: float, a) -> int:
    return int(np.count_nonzero(as_series(a) == x))


def index_set(x: float, b) -> Set[int]:
    """1-based positions ``j`` with ``b[j] == x``; ``b`` is expected sorted."""
    return {int(j) + 1 for j in np.flatnonzero(as_series(b) == x)}


def avg(positions: Set[int]) -> float:
    if not positions:
        raise ElementAbsent("average of an empty index set")
    return sum(positions) / len(positions)


def rank(x: float, a) -> float:
    positions = index_set(x, sort(a))
    if not positions:
        raise ElementAbsent(f"{x!r} does not occur in the series")
    return avg(positions)


def ranks(a) -> np.ndarray:
    a = as_series(a)
    return rank_rows(a[None, :])[0]


# ---------------------------------------------------------------------------
# row kernels

def _row_means(x: np.ndarray) -> np.ndarray:
    return x.sum(axis=1) / x.shape[1]


def _centred_unit(x: np.ndarray) -> np.ndarray:
    """Deviations from the row mean, scaled by a power of two so the largest
    magnitude lies in [0.5, 1). The scaling is exact and keeps the sums of
    squares clear of underflow and overflow."""
    d = x - _row_means(x)[:, None]
    _, exp = np.frexp(np.abs(d).max(axis=1))
    return np.ldexp(d, -exp[:, None])


def _row_constant(x: np.ndarray) -> np.ndarray:
    return x.max(axis=1) == x.min(axis=1)


def rank_rows(x: np.ndarray) -> np.ndarray:
    """Tie-averaged 1-based ranks of every row of ``x``.

    Tied values occupy a contiguous block ``start..end`` (0-based) of the
    sorted row, so the average of their 1-based positions is
    ``(start + end) / 2 + 1``.
    """
    x = np.asarray(x, dtype=np.float64)
    m, n = x.shape
    order = np.argsort(x, axis=1, kind="stable")
    srt = np.take_along_axis(x, order, axis=1)
    pos = np.broadcast_to(np.arange(n), (m, n))

    first = np.ones((m, n), dtype=bool)
    first[:, 1:] = srt[:, 1:] != srt[:, :-1]
    last = np.ones((m, n), dtype=bool)
    last[:, :-1] = first[:, 1:]

    start = np.maximum.accumulate(np.where(first, pos, 0), axis=1)
    end = np.minimum.accumulate(np.where(last, pos, n - 1)[:, ::-1], axis=1)[:, ::-1]

    out = np.empty((m, n), dtype=np.float64)
    np.put_along_axis(out, order, (start + end) / 2.0 + 1.0, axis=1)
    return out


def _clamp(r: np.ndarray) -> np.ndarray:
    limit = 1.0 + CLAMP_ULPS * EPS
    over = np.abs(r) > limit
    if np.any(over):
        worst = float(np.max(np.abs(r[over])))
        raise ConsistencyError(f"correlation magnitude {worst!r} exceeds 1 by more than {CLAMP_ULPS} ulp")
    return np.clip(r, -1.0, 1.0)


def pearson_rows(x: np.ndarray, y) -> Tuple[np.ndarray, np.ndarray]:
    """Two-pass Pearson coefficient of every row of ``x`` against ``y``.

    Returns ``(values, codes)``; where ``codes != 0`` the value is NaN and the
    code names the :class:`UndefinedReason`.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)[None, :]
    if x.ndim != 2 or x.shape[1] != y.shape[1]:
        raise LengthMismatch(f"row length {x.shape[-1]} vs reference length {y.shape[1]}")

    dx = _centred_unit(x)
    dy = _centred_unit(y)
    sxx = (dx * dx).sum(axis=1)
    syy = (dy * dy).sum(axis=1)
    sxy = (dx * dy).sum(axis=1)

    codes = np.zeros(x.shape[0], dtype=np.int8)
    if _row_constant(y)[0] or syy[0] == 0.0:
        codes[:] = 2
    codes[_row_constant(x) | (sxx == 0.0)] = 1

    ok = codes == DEFINED
    denom = np.sqrt(sxx * syy)
    values = np.full(x.shape[0], np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        values[ok] = _clamp(sxy[ok] / denom[ok])
    return values, codes


def spearman_rows(x: np.ndarray, y) -> Tuple[np.ndarray, np.ndarray]:
    return pearson_rows(rank_rows(x), ranks(y))


def _rank_signs(r: np.ndarray) -> np.ndarray:
    centre = (r.shape[1] + 1) / 2.0
    return np.sign(r - centre).astype(np.int8)


def quadrant_rows(x: np.ndarray, y) -> Tuple[np.ndarray, np.ndarray]:
    """Mean product of rank signs about the rank midpoint ``(n+1)/2``."""
    x = np.asarray(x, dtype=np.float64)
    y = as_series(y)
    if x.ndim != 2 or x.shape[1] != y.size:
        raise LengthMismatch(f"row length {x.shape[-1]} vs reference length {y.size}")
    n = y.size
    sx = _rank_signs(rank_rows(x))
    sy = _rank_signs(rank_rows(y[None, :]))
    prod = sx.astype(np.int64) * sy
    total = prod.sum(axis=1)
    nonzero = np.count_nonzero(prod, axis=1)

    codes = np.zeros(x.shape[0], dtype=np.int8)
    codes[nonzero == 0] = 3
    if not np.any(sy):
        codes[:] = 2
    codes[~np.any(sx, axis=1)] = 1
    values = np.where(codes == DEFINED, total / n, np.nan)
    return values, codes


# ---------------------------------------------------------------------------
# scalar API

def _scalar(kernel, a, b) -> CorrelationValue:
    a, b = _pair(a, b)
    values, codes = kernel(a[None, :], b)
    if codes[0] != DEFINED:
        return Undefined(reason_for(codes[0]))
    return float(values[0])


def pearson(a, b) -> CorrelationValue:
    return _scalar(pearson_rows, a, b)


def spearman(a, b) -> CorrelationValue:
    """Pearson correlation of the tie-averaged ranks."""
    a, b = _pair(a, b)
    return pearson(ranks(a), ranks(b))


def quadrant(a, b) -> CorrelationValue:
    return _scalar(quadrant_rows, a, b)


STATISTICS = {
    "pearson": pearson_rows,
    "spearman": spearman_rows,
    "quadrant": quadrant_rows,
}
