import numpy as np
import pytest

from fimcheck import nifti_io
from fimcheck.nifti_io import VolumeGrid4D
from fimcheck.timeseries_io import IdealSeries


def square_wave(nt, period=20):
    return np.array([1.0 if (t // (period // 2)) % 2 else 0.0 for t in range(nt)])


def make_volume(samples):
    samples = np.asarray(samples, dtype=np.float64)
    return VolumeGrid4D(dims=samples.shape, samples=samples)


def noise_volume(dims, seed=0, base=1000.0, sd=10.0):
    rng = np.random.default_rng(seed)
    return base + sd * rng.standard_normal(dims)


def ideal(values, label="ideal"):
    return IdealSeries(label=label, values=tuple(float(v) for v in values))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def write_inputs(tmp_path):
    """Write a volume and ideal files; returns (volume_path, [ideal_paths])."""

    def _write(samples, ideals, **kw):
        vpath = tmp_path / "run.nii"
        nifti_io.write_volume(make_volume(samples), vpath, **kw)
        paths = []
        for n, values in enumerate(ideals):
            p = tmp_path / f"ideal{n}.1D"
            p.write_text("".join(f"{float(v)!r}\n" for v in values))
            paths.append(p)
        return vpath, paths

    return _write


# ---------------------------------------------------------------------------
# acceptance criteria: one PASS/FAIL line per criterion in the summary

_CRITERIA = {}


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    n, title = crit
    ok = report.passed or (report.when != "call" and not report.failed)
    prev = _CRITERIA.get(n, (title, True))
    _CRITERIA[n] = (title, prev[1] and ok)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}")
