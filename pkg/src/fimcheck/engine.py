"""Voxel-wise correlation of a 4D volume against one or more ideal series."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from fimcheck import stats_core
from fimcheck.assumption_guard import AssumptionReport, Verdict
from fimcheck.nifti_io import VolumeGrid4D, flat_to_ijk, voxel_to_anatomical

logger = logging.getLogger(__name__)

STATISTICS = ("pearson", "spearman", "quadrant")

# Fixed partition size: the voxel partition never depends on the worker
# count, so results are identical for any number of workers.
CHUNK_VOXELS = 4096

QUADRANT_NOTE = (
    "quadrant = mean over samples of sgn(rank(a_i) - (n+1)/2) * sgn(rank(b_i) - (n+1)/2), "
    "ties ranked by position average; this is an interpretation of the coefficient"
)


class EngineError(Exception):
    pass


class GuardNotPassed(EngineError):
    pass


class NoDefinedVoxels(EngineError):
    pass


@dataclass(frozen=True)
class CorrelationMap:
    """Per-voxel statistic; ``values`` is NaN wherever ``defined`` is False."""

    dims: Tuple[int, int, int]
    statistic: str
    values: np.ndarray = field(repr=False)
    defined: np.ndarray = field(repr=False)
    best_ideal: np.ndarray = field(repr=False)

    def undefined_indices(self) -> List[Tuple[int, int, int]]:
        """Zero-based indices of undefined voxels, in storage order."""
        flat = np.flatnonzero(~self.defined.ravel(order="F"))
        return [flat_to_ijk(int(v), self.dims) for v in flat]

    def value_at(self, index) -> Optional[float]:
        i, j, k = index
        return float(self.values[i, j, k]) if self.defined[i, j, k] else None


@dataclass(frozen=True)
class ExtremaReport:
    min_value: float
    max_value: float
    min_index: Tuple[int, int, int]
    max_index: Tuple[int, int, int]
    min_anatomical: str
    max_anatomical: str

    def to_dict(self) -> dict:
        return {
            "min": {"value": self.min_value, "index": list(self.min_index),
                    "index_one_based": [x + 1 for x in self.min_index],
                    "anatomical": self.min_anatomical},
            "max": {"value": self.max_value, "index": list(self.max_index),
                    "index_one_based": [x + 1 for x in self.max_index],
                    "anatomical": self.max_anatomical},
        }


def _to_grid(flat: np.ndarray, dims) -> np.ndarray:
    return flat.reshape(dims, order="F")


def _chunks(nvox: int):
    return [(s, min(s + CHUNK_VOXELS, nvox)) for s in range(0, nvox, CHUNK_VOXELS)]


def _run_chunk(vox: np.ndarray, ideals: Sequence[np.ndarray], statistics, bounds):
    s, e = bounds
    block = np.ascontiguousarray(vox[s:e])
    m = e - s
    best = np.full(m, -1, dtype=np.int64)
    best_abs = np.full(m, -np.inf)
    for idx, ideal in enumerate(ideals):
        r, codes = stats_core.pearson_rows(block, ideal)
        mag = np.where(codes == stats_core.DEFINED, np.abs(r), -np.inf)
        better = mag > best_abs  # strict: earlier ideal wins ties
        best[better] = idx
        best_abs[better] = mag[better]

    out = {}
    for stat in statistics:
        kernel = stats_core.STATISTICS[stat]
        values = np.full(m, np.nan)
        codes = np.full(m, 1, dtype=np.int8)
        for idx, ideal in enumerate(ideals):
            rows = np.flatnonzero(best == idx)
            if rows.size:
                v, c = kernel(block[rows], ideal)
                values[rows] = v
                codes[rows] = c
        out[stat] = (values, codes)
    return s, e, best, out


def analyze(
    volume: VolumeGrid4D,
    ideals: Sequence,
    statistics: Iterable[str] = ("pearson",),
    *,
    guard: Optional[AssumptionReport],
    workers: int = 1,
) -> List[CorrelationMap]:
    """Compute one :class:`CorrelationMap` per requested statistic.

    For every voxel the ideal with the largest ``|pearson|`` is selected
    (lowest index on ties) and every statistic is computed against it.
    ``guard`` must be a passing :func:`check_inputs` report for these inputs.
    """
    if guard is None or guard.verdict is not Verdict.PROCEED:
        raise GuardNotPassed("input checks have not passed; refusing to analyse")
    statistics = [s for s in STATISTICS if s in set(statistics)]
    if not statistics:
        raise ValueError("no statistics requested")
    ideal_arrays = [np.asarray(getattr(s, "values", s), dtype=np.float64) for s in ideals]
    for a in ideal_arrays:
        if a.size != volume.nt:
            raise stats_core.LengthMismatch(f"ideal length {a.size} != nt {volume.nt}")

    vox = volume.voxel_matrix()
    nvox = volume.nvox
    best = np.empty(nvox, dtype=np.int64)
    values = {s: np.empty(nvox) for s in statistics}
    codes = {s: np.empty(nvox, dtype=np.int8) for s in statistics}

    def collect(result):
        s, e, b, out = result
        best[s:e] = b
        for stat, (v, c) in out.items():
            values[stat][s:e] = v
            codes[stat][s:e] = c

    chunks = _chunks(nvox)
    if workers <= 1:
        for bounds in chunks:
            collect(_run_chunk(vox, ideal_arrays, statistics, bounds))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(lambda b: _run_chunk(vox, ideal_arrays, statistics, b), chunks):
                collect(result)

    dims3 = tuple(volume.dims[:3])
    maps = []
    for stat in statistics:
        defined = codes[stat] == stats_core.DEFINED
        if not defined.any():
            raise NoDefinedVoxels(f"{stat}: no voxel has a defined value")
        b = np.where(defined, best, -1)
        maps.append(CorrelationMap(
            dims=dims3,
            statistic=stat,
            values=_to_grid(values[stat], dims3),
            defined=_to_grid(defined, dims3),
            best_ideal=_to_grid(b, dims3),
        ))
        logger.info("%s: %d/%d voxels defined", stat, int(defined.sum()), nvox)
    return maps


def _lexi_first(flat_candidates: np.ndarray, dims) -> Tuple[int, int, int]:
    return min(flat_to_ijk(int(v), dims) for v in flat_candidates)


def extrema(cmap: CorrelationMap) -> ExtremaReport:
    """Global min and max over defined voxels.

    Equal values are resolved to the lexicographically smallest ``(i, j, k)``.
    """
    vals = cmap.values.ravel(order="F")
    defined = cmap.defined.ravel(order="F")
    if not defined.any():
        raise NoDefinedVoxels(f"{cmap.statistic}: no defined voxels")
    dv = vals[defined]
    lo, hi = float(dv.min()), float(dv.max())
    lo_idx = _lexi_first(np.flatnonzero(defined & (vals == lo)), cmap.dims)
    hi_idx = _lexi_first(np.flatnonzero(defined & (vals == hi)), cmap.dims)
    return ExtremaReport(
        min_value=lo,
        max_value=hi,
        min_index=lo_idx,
        max_index=hi_idx,
        min_anatomical=voxel_to_anatomical(lo_idx, cmap.dims),
        max_anatomical=voxel_to_anatomical(hi_idx, cmap.dims),
    )
