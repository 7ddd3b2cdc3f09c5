"""Independent pseudo-oracle for the correlation statistics.

Nothing here calls into :mod:`fimcheck.stats_core`; only the
:class:`~fimcheck.stats_core.Undefined` value type is shared. The
formulations deliberately differ from the main path:

* Pearson: single-pass accumulation of shifted raw moments in extended
  precision (``np.longdouble``), ``cov / (sd_a * sd_b)``.
* ranks: the counting identity ``#{a_j < a_i} + (#{a_j == a_i} + 1) / 2``
  instead of sorting.
* Quadrant: explicit enumeration of positive and negative sign agreements.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, Sequence, Tuple

import numpy as np

from fimcheck.stats_core import Undefined, UndefinedReason

_LD = np.longdouble
_CHUNK = 256


def _check_pair(a, b) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"lengths differ: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("need at least 2 samples")
    return a, b


def oracle_pearson_rows(x: np.ndarray, y) -> Tuple[np.ndarray, np.ndarray]:
    """Pearson of each row of ``x`` against ``y``; returns (values, codes).

    One pass over the time axis, accumulating sums of shifted samples, their
    squares and cross products. Shifting by the first sample keeps the raw
    moment differences well conditioned and makes a constant series produce
    an exactly zero variance.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    m, n = x.shape
    if n != y.size:
        raise ValueError("row length differs from reference length")

    x0 = x[:, 0].astype(_LD)
    y0 = _LD(y[0])
    sa = np.zeros(m, dtype=_LD)
    saa = np.zeros(m, dtype=_LD)
    sab = np.zeros(m, dtype=_LD)
    sb = _LD(0)
    sbb = _LD(0)
    for t in range(n):
        da = x[:, t].astype(_LD) - x0
        db = _LD(y[t]) - y0
        sa += da
        saa += da * da
        sab += da * db
        sb += db
        sbb += db * db

    nn = _LD(n)
    cov = nn * sab - sa * sb
    var_a = nn * saa - sa * sa
    var_b = nn * sbb - sb * sb

    codes = np.zeros(m, dtype=np.int8)
    if not var_b > 0:
        codes[:] = 2
    codes[~(var_a > 0)] = 1
    ok = codes == 0
    r = np.full(m, np.nan)
    if np.any(ok):
        rl = (cov[ok] / (np.sqrt(var_a[ok]) * np.sqrt(var_b))).astype(np.float64)
        if np.any(np.abs(rl) > 1.0 + 1e-14):
            raise ArithmeticError("oracle correlation outside [-1, 1]")
        r[ok] = np.clip(rl, -1.0, 1.0)
    return r, codes


def oracle_ranks_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape, dtype=np.float64)
    for s in range(0, x.shape[0], _CHUNK):
        blk = x[s : s + _CHUNK]
        less = (blk[:, None, :] < blk[:, :, None]).sum(axis=2)
        equal = (blk[:, None, :] == blk[:, :, None]).sum(axis=2)
        out[s : s + _CHUNK] = less + (equal + 1) / 2.0
    return out


def oracle_quadrant_rows(x: np.ndarray, y) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.size
    mid = (n + 1) / 2.0
    rx = oracle_ranks_rows(x)
    ry = oracle_ranks_rows(y[None, :])[0]

    above_x, below_x = rx > mid, rx < mid
    above_y, below_y = ry > mid, ry < mid
    agree = (above_x & above_y) | (below_x & below_y)
    disagree = (above_x & below_y) | (below_x & above_y)
    pos = agree.sum(axis=1)
    neg = disagree.sum(axis=1)

    codes = np.zeros(x.shape[0], dtype=np.int8)
    codes[pos + neg == 0] = 3
    if not (above_y.any() or below_y.any()):
        codes[:] = 2
    codes[~(above_x.any(axis=1) | below_x.any(axis=1))] = 1
    values = np.where(codes == 0, (pos - neg) / n, np.nan)
    return values, codes


def oracle_spearman_rows(x: np.ndarray, y) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    return oracle_pearson_rows(oracle_ranks_rows(x), oracle_ranks_rows(y[None, :])[0])


_REASONS = {
    1: UndefinedReason.ZERO_VARIANCE_LEFT,
    2: UndefinedReason.ZERO_VARIANCE_RIGHT,
    3: UndefinedReason.NO_SIGN_PRODUCTS,
}


def _scalar(kernel, a, b):
    a, b = _check_pair(a, b)
    values, codes = kernel(a[None, :], b)
    if codes[0]:
        return Undefined(_REASONS[int(codes[0])])
    return float(values[0])


def oracle_pearson(a, b):
    return _scalar(oracle_pearson_rows, a, b)


def oracle_spearman(a, b):
    return _scalar(oracle_spearman_rows, a, b)


def oracle_quadrant(a, b):
    return _scalar(oracle_quadrant_rows, a, b)


def oracle_ranks(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).ravel()
    return oracle_ranks_rows(a[None, :])[0]


def oracle_mean(a) -> float:
    """Exact rational mean, rounded once."""
    vals = [Fraction(float(v)) for v in np.asarray(a, dtype=np.float64).ravel()]
    return float(sum(vals) / len(vals))


ORACLE_STATISTICS = {
    "pearson": oracle_pearson_rows,
    "spearman": oracle_spearman_rows,
    "quadrant": oracle_quadrant_rows,
}


def oracle_analyze(voxels: np.ndarray, ideals: Sequence[Sequence[float]], statistics) -> Dict[str, dict]:
    """Brute-force recomputation of every requested map.

    ``voxels`` is the (nvox, nt) voxel matrix. Best ideal per voxel is the
    largest ``|pearson|``; on equal magnitude the lower ideal index wins.
    """
    voxels = np.asarray(voxels, dtype=np.float64)
    nvox = voxels.shape[0]
    best = np.full(nvox, -1, dtype=np.int64)
    best_abs = np.full(nvox, -np.inf)
    for e, ideal in enumerate(ideals):
        r, codes = oracle_pearson_rows(voxels, ideal)
        a = np.where(codes == 0, np.abs(r), -np.inf)
        better = a > best_abs
        best[better] = e
        best_abs[better] = a[better]

    out = {}
    for stat in statistics:
        kernel = ORACLE_STATISTICS[stat]
        values = np.full(nvox, np.nan)
        codes = np.full(nvox, 1, dtype=np.int8)
        for e, ideal in enumerate(ideals):
            sel = np.flatnonzero(best == e)
            for s in range(0, sel.size, 4096):
                idx = sel[s : s + 4096]
                v, c = kernel(voxels[idx], ideal)
                values[idx] = v
                codes[idx] = c
        out[stat] = {"values": values, "defined": codes == 0, "best_ideal": best.copy()}
    return out
