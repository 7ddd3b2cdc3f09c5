"""Command-line entry point: ``analyze``, ``verify`` and ``gsn-check``."""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from fimcheck import __version__, engine, gsn_case, nifti_io, oracle, stats_core, timeseries_io
from fimcheck.assumption_guard import Verdict, check_inputs, warning_text

logger = logging.getLogger("fimcheck")

EXIT_OK = 0
EXIT_REFUSED = 2
EXIT_INPUT = 3
EXIT_INTERNAL = 4
EXIT_DISCREPANCY = 5
EXIT_GSN_ISSUES = 6
EXIT_GSN_VIOLATED = 7

ORACLE_TOLERANCE = 1e-12


@dataclass
class RunConfig:
    input_path: Path
    ideal_paths: List[Path]
    statistics: List[str] = field(default_factory=lambda: ["pearson"])
    output_prefix: Path = Path("fim")
    acknowledged: bool = False
    workers: int = 1
    report_format: str = "text"
    check_maps: bool = False

    def __post_init__(self):
        if not self.ideal_paths:
            raise ValueError("at least one ideal series is required")
        if not self.statistics:
            raise ValueError("at least one statistic is required")


def map_path(prefix: Path, statistic: str) -> Path:
    prefix = Path(prefix)
    return prefix.with_name(f"{prefix.name}_{statistic}.nii")


def report_path(prefix: Path, fmt: str) -> Path:
    prefix = Path(prefix)
    return prefix.with_name(f"{prefix.name}_report.{'json' if fmt == 'structured' else 'txt'}")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _provenance(config: RunConfig, mode: str) -> dict:
    return {
        "tool": "fimcheck",
        "version": __version__,
        "mode": mode,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "input": {"path": str(config.input_path), "sha256": _sha256(config.input_path)},
        "ideals": [{"index": i, "path": str(p), "sha256": _sha256(p)}
                   for i, p in enumerate(config.ideal_paths)],
        "statistics": list(config.statistics),
        "workers": config.workers,
    }


def _emit(doc: dict, fmt: str, stream=None) -> str:
    text = json.dumps(doc, indent=2) if fmt == "structured" else render_text_report(doc)
    print(text, file=stream or sys.stdout)
    return text


def render_text_report(doc: dict) -> str:
    lines = [f"fimcheck {doc['provenance']['version']} ({doc['provenance']['mode']})"]
    lines.append(f"orientation: {doc['orientation']}")
    lines.append(f"indices: {doc['index_convention']}")
    guard = doc.get("assumptions")
    if guard:
        lines.append(f"assumption verdict: {guard['verdict'].upper()}")
        for c in guard["checks"]:
            extra = f": {c['detail']}" if c["detail"] else ""
            lines.append(f"  [{c['status']:>14}] {c['id']}{extra}")
    for stat, info in doc.get("maps", {}).items():
        lines.append(f"{stat}: {info['defined_voxels']} defined, {info['undefined_voxels']} undefined"
                     + (f" -> {info['file']}" if info.get("file") else ""))
        if "note" in info:
            lines.append(f"  note: {info['note']}")
        ex = info.get("extrema")
        if ex:
            for which in ("min", "max"):
                e = ex[which]
                i, j, k = e["index"]
                lines.append(f"  {which} {e['value']:+.12f} at {nifti_io.format_index((i, j, k))}"
                             f" ({e['anatomical']})")
    orc = doc.get("oracle")
    if orc:
        lines.append(f"oracle max discrepancy: {orc['max_discrepancy']:.3e} "
                     f"(tolerance {orc['tolerance']:.0e}) -> {orc['status'].upper()}")
        if orc.get("first_offender"):
            lines.append(f"  first offender: {orc['first_offender']}")
    return "\n".join(lines)


def _base_doc(config: RunConfig, mode: str) -> dict:
    return {
        "provenance": _provenance(config, mode),
        "orientation": nifti_io.ORIENTATION.describe() + " (header qform/sform ignored)",
        "index_convention": "zero-based (i,j,k); one-based shown in brackets",
        "results": {},
    }


def _load(config: RunConfig):
    volume = nifti_io.read_volume(config.input_path)
    ideals = []
    for p in config.ideal_paths:
        try:
            ideals.append(timeseries_io.read_1d(p))
        except OSError as exc:
            raise nifti_io.IoFailure(f"cannot read {p}: {exc}") from exc
    return volume, ideals


def _guarded_inputs(config: RunConfig, mode: str):
    """Print the warning, load inputs and run the guard.

    Returns ``(exit_code, doc, volume, ideals, guard)``; a nonzero exit code
    means the caller must stop.
    """
    print(warning_text(), file=sys.stderr)
    try:
        volume, ideals = _load(config)
    except (nifti_io.NiftiError, timeseries_io.SeriesError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT, None, None, None, None
    doc = _base_doc(config, mode)
    guard = check_inputs(volume, ideals, config.acknowledged)
    doc["assumptions"] = guard.to_dict()
    doc["results"].update({c.id: c.status.value for c in guard.checks})
    if guard.verdict is not Verdict.PROCEED:
        _emit(doc, config.report_format)
        print("refusing to proceed: input checks failed or assumptions not acknowledged",
              file=sys.stderr)
        return EXIT_REFUSED, doc, volume, ideals, guard
    return EXIT_OK, doc, volume, ideals, guard


def _map_summary(cmap: engine.CorrelationMap) -> dict:
    info = {
        "defined_voxels": int(cmap.defined.sum()),
        "undefined_voxels": int((~cmap.defined).sum()),
        "extrema": engine.extrema(cmap).to_dict(),
    }
    if cmap.statistic == "quadrant":
        info["note"] = engine.QUADRANT_NOTE
    return info


def run_analyze(config: RunConfig) -> int:
    code, doc, volume, ideals, guard = _guarded_inputs(config, "analyze")
    if code:
        return code
    try:
        maps = engine.analyze(volume, ideals, config.statistics, guard=guard, workers=config.workers)
    except engine.NoDefinedVoxels as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except stats_core.ConsistencyError as exc:
        print(f"internal consistency error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL

    prefix = Path(config.output_prefix)
    out_dir = prefix.parent if str(prefix.parent) else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".fimcheck-", dir=out_dir))
    moved: List[Path] = []
    try:
        doc["maps"] = {}
        finals = []
        for cmap in maps:
            final = map_path(prefix, cmap.statistic)
            staged = staging / final.name
            side = nifti_io.write_map(cmap, volume.header, staged)
            finals += [(staged, final), (side, nifti_io.sidecar_path(final))]
            info = _map_summary(cmap)
            info["file"] = str(final)
            info["sidecar"] = str(nifti_io.sidecar_path(final))
            doc["maps"][cmap.statistic] = info
        rep = report_path(prefix, config.report_format)
        text = json.dumps(doc, indent=2) if config.report_format == "structured" else render_text_report(doc)
        (staging / rep.name).write_text(text + "\n")
        finals.append((staging / rep.name, rep))
        for src, dst in finals:
            os.replace(src, dst)
            moved.append(dst)
    except (OSError, nifti_io.NiftiError) as exc:
        for p in moved:
            p.unlink(missing_ok=True)
        print(f"error writing outputs: {exc}", file=sys.stderr)
        return EXIT_INPUT
    finally:
        shutil.rmtree(staging, ignore_errors=True)

    print(text)
    return EXIT_OK


def _discrepancy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # correlations live on [-1, 1], so the unit scale floors the denominator
    return np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))


def _f32_ulp(x: np.ndarray) -> np.ndarray:
    x32 = np.abs(x.astype(np.float32))
    return np.spacing(x32).astype(np.float64)


def run_verify(config: RunConfig) -> int:
    """Recompute every map with the pseudo-oracle and compare.

    With ``check_maps`` the map files already written under the prefix are
    compared too, at float32 resolution.
    """
    code, doc, volume, ideals, guard = _guarded_inputs(config, "verify")
    if code:
        return code
    try:
        maps = engine.analyze(volume, ideals, config.statistics, guard=guard, workers=config.workers)
    except engine.NoDefinedVoxels as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except stats_core.ConsistencyError as exc:
        print(f"internal consistency error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL

    dims = volume.dims
    ref = oracle.oracle_analyze(volume.voxel_matrix(), [s.values for s in ideals], config.statistics)
    worst = 0.0
    offender: Optional[str] = None
    doc["maps"] = {}

    def flag(stat, flat_idx, what):
        nonlocal offender
        if offender is None:
            ijk = nifti_io.flat_to_ijk(int(flat_idx), dims)
            offender = f"{stat} at {nifti_io.format_index(ijk)}: {what}"

    for cmap in maps:
        stat = cmap.statistic
        vals = cmap.values.ravel(order="F")
        defined = cmap.defined.ravel(order="F")
        o = ref[stat]
        mismatch = np.flatnonzero(defined != o["defined"])
        if mismatch.size:
            worst = np.inf
            flag(stat, mismatch[0], "definedness differs from oracle")
        both = defined & o["defined"]
        d = np.zeros_like(vals)
        d[both] = _discrepancy(vals[both], o["values"][both])
        if d.size and d.max() > worst:
            worst = float(d.max())
        over = np.flatnonzero(d > ORACLE_TOLERANCE)
        if over.size:
            flag(stat, over[0], f"discrepancy {d[over[0]]:.3e}")
        summary = _map_summary(cmap)

        if config.check_maps:
            path = map_path(config.output_prefix, stat)
            try:
                stored = nifti_io.read_volume(path).samples[..., 0].ravel(order="F")
                listed = set(nifti_io.read_sidecar(nifti_io.sidecar_path(path)))
            except (nifti_io.NiftiError, OSError, ValueError) as exc:
                print(f"error: cannot re-check {path}: {exc}", file=sys.stderr)
                return EXIT_INPUT
            if stored.size != vals.size:
                print(f"error: {path} has {stored.size} voxels, expected {vals.size}", file=sys.stderr)
                return EXIT_INPUT
            want = np.where(o["defined"], o["values"], 0.0).astype(np.float32).astype(np.float64)
            bad_file = np.flatnonzero(np.abs(stored - want) > _f32_ulp(want))
            if bad_file.size:
                worst = max(worst, float(np.max(np.abs(stored - want))))
                flag(stat, bad_file[0], f"stored value {stored[bad_file[0]]!r} != oracle "
                                        f"{want[bad_file[0]]!r} in {path}")
            oracle_undefined = {nifti_io.flat_to_ijk(int(v), dims) for v in np.flatnonzero(~o["defined"])}
            if listed != oracle_undefined:
                worst = np.inf
                diff = sorted(listed ^ oracle_undefined)
                flag(stat, nifti_io.ijk_to_flat(diff[0], dims), "sidecar undefined list differs")
            summary["file"] = str(path)
        doc["maps"][stat] = summary

    ok = offender is None and worst <= ORACLE_TOLERANCE
    doc["oracle"] = {
        "max_discrepancy": worst,
        "tolerance": ORACLE_TOLERANCE,
        "status": "pass" if ok else "fail",
        "first_offender": offender,
    }
    doc["results"]["oracle.equivalence"] = "pass" if ok else "fail"
    _emit(doc, config.report_format)
    if not ok:
        print(f"oracle discrepancy: {offender}", file=sys.stderr)
        return EXIT_DISCREPANCY
    return EXIT_OK


def run_gsn_check(case_path, results_paths: Sequence = (), *, annotated_out=None, dot_out=None,
                  stream=None) -> int:
    stream = stream or sys.stdout
    try:
        case = gsn_case.parse_case(Path(case_path).read_text())
        docs = [json.loads(Path(p).read_text()) for p in results_paths]
    except (gsn_case.GsnError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    issues = gsn_case.validate(case)
    for issue in issues:
        print(str(issue), file=stream)
    annotated = gsn_case.link_evidence(case, gsn_case.collect_results(*docs))
    for label, status in annotated.annotations.items():
        print(f"evidence {label}: {status.value}", file=stream)
    s = annotated.summary
    print(f"summary: {len(gsn_case.errors(issues))} issue(s); "
          f"{s['satisfied']} satisfied, {s['violated']} violated, {s['missing']} missing evidence",
          file=stream)
    if annotated_out:
        Path(annotated_out).write_text(annotated.to_json() + "\n")
    if dot_out:
        Path(dot_out).write_text(annotated.to_dot())

    if gsn_case.errors(issues):
        return EXIT_GSN_ISSUES
    if s["violated"]:
        return EXIT_GSN_VIOLATED
    return EXIT_OK


def _statistics(choice: str) -> List[str]:
    return list(engine.STATISTICS) if choice == "all" else [choice]


def _workers(value: str) -> int:
    if value == "auto":
        return os.cpu_count() or 1
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("--workers must be a positive integer or 'auto'")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fimcheck",
        description="Voxel-wise correlation maps for fMRI runs, with input guarding, "
                    "an independent oracle check and GSN evidence linking.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("analyze", "compute correlation maps"),
                            ("verify", "recompute maps with the pseudo-oracle and compare")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--input", required=True, type=Path, help="4D NIfTI-1 volume (.nii)")
        p.add_argument("--ideal", required=True, action="append", type=Path,
                       help="ideal time series file; repeat for several (order = ideal index)")
        p.add_argument("--out", default="pearson", choices=["pearson", "spearman", "quadrant", "all"])
        p.add_argument("--prefix", default=Path("fim"), type=Path)
        p.add_argument("--ack-assumptions", action="store_true",
                       help="confirm you have checked the printed operational assumptions")
        p.add_argument("--workers", default="1", type=_workers)
        p.add_argument("--report", default="text", choices=["text", "structured"])
        if name == "verify":
            p.add_argument("--check-maps", action="store_true",
                           help="also re-check <prefix>_<statistic>.nii files against the oracle")

    g = sub.add_parser("gsn-check", help="validate a GSN case and link evidence")
    g.add_argument("case", type=Path)
    g.add_argument("--results", action="append", default=[], type=Path,
                   help="structured results document (JSON); repeatable")
    g.add_argument("--annotated", type=Path, help="write the annotated case as JSON")
    g.add_argument("--dot", type=Path, help="write a Graphviz description")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "gsn-check":
        return run_gsn_check(args.case, args.results, annotated_out=args.annotated, dot_out=args.dot)

    config = RunConfig(
        input_path=args.input,
        ideal_paths=list(args.ideal),
        statistics=_statistics(args.out),
        output_prefix=args.prefix,
        acknowledged=args.ack_assumptions,
        workers=args.workers,
        report_format=args.report,
        check_maps=getattr(args, "check_maps", False),
    )
    if args.command == "analyze":
        return run_analyze(config)
    return run_verify(config)


if __name__ == "__main__":
    sys.exit(main())
