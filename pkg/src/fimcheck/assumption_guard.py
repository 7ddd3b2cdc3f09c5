"""Operational-assumption checks that gate an analysis run.

Machine-checkable conditions are verified directly. Conditions the software
cannot decide are recorded as user obligations and only count as met when
the user acknowledges them explicitly for this run.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from fimcheck.nifti_io import VolumeGrid4D, flat_to_ijk


class Kind(str, enum.Enum):
    MACHINE = "machine"
    USER_OBLIGATION = "user_obligation"


class Status(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    ACKNOWLEDGED = "acknowledged"
    UNACKNOWLEDGED = "unacknowledged"


class Verdict(str, enum.Enum):
    PROCEED = "proceed"
    REFUSE = "refuse"


_MACHINE_STATUSES = (Status.PASS, Status.FAIL)
_OBLIGATION_STATUSES = (Status.ACKNOWLEDGED, Status.UNACKNOWLEDGED)

A1 = "The variables should be either of type interval or ratio."
A2 = "There is a linear relationship between the two variables."
A3 = "The variables are bivariately normally distributed."

OBLIGATIONS = (
    ("GA.2.A1.interval_or_ratio", A1),
    ("GA.2.A2.linearity", A2),
    ("GA.2.A3.bivariate_normality", A3),
)

_WARNING = f"""\
WARNING: correlation maps are only meaningful if your data meet the
operational assumptions of the Pearson model. It is YOUR responsibility
to confirm, before relying on any output, that:

  A1. {A1}
  A2. {A2}
  A3. {A3}

This software checks what it can (positive samples, matching series
lengths) but cannot tell whether a parametric statistical model suits
your data or whether this is the right tool for your study. If a
non-parametric model is more appropriate, use a different tool.
Re-run with --ack-assumptions once you have checked the items above.
"""


def warning_text() -> str:
    return _WARNING


@dataclass(frozen=True)
class AssumptionCheck:
    id: str
    kind: Kind
    status: Status
    detail: str = ""

    def __post_init__(self):
        allowed = _MACHINE_STATUSES if self.kind is Kind.MACHINE else _OBLIGATION_STATUSES
        if self.status not in allowed:
            raise ValueError(f"{self.kind.value} check {self.id} cannot have status {self.status.value}")

    @property
    def ok(self) -> bool:
        return self.status in (Status.PASS, Status.ACKNOWLEDGED)


@dataclass(frozen=True)
class AssumptionReport:
    checks: Tuple[AssumptionCheck, ...]

    @property
    def verdict(self) -> Verdict:
        return Verdict.PROCEED if all(c.ok for c in self.checks) else Verdict.REFUSE

    @property
    def failures(self) -> Tuple[AssumptionCheck, ...]:
        return tuple(c for c in self.checks if not c.ok)

    def get(self, check_id: str) -> AssumptionCheck:
        for c in self.checks:
            if c.id == check_id:
                return c
        raise KeyError(check_id)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "checks": [
                {"id": c.id, "kind": c.kind.value, "status": c.status.value, "detail": c.detail}
                for c in self.checks
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = [f"assumption verdict: {self.verdict.value.upper()}"]
        for c in self.checks:
            line = f"  [{c.status.value:>14}] {c.id} ({c.kind.value})"
            if c.detail:
                line += f": {c.detail}"
            lines.append(line)
        return "\n".join(lines)


def _positivity(volume: VolumeGrid4D) -> AssumptionCheck:
    cid = "GA.1.positivity"
    vox = volume.voxel_matrix()
    bad_rows = np.flatnonzero(~np.all(vox > 0, axis=1))
    if bad_rows.size == 0:
        return AssumptionCheck(cid, Kind.MACHINE, Status.PASS)
    v = int(bad_rows[0])
    t = int(np.flatnonzero(~(vox[v] > 0))[0])
    i, j, k = flat_to_ijk(v, volume.dims)
    detail = (
        f"({i},{j},{k})"
        f" [one-based ({i + 1},{j + 1},{k + 1})] frame {t} value {float(vox[v, t])!r};"
        f" {bad_rows.size} voxel(s) with non-positive samples"
    )
    return AssumptionCheck(cid, Kind.MACHINE, Status.FAIL, detail)


def check_inputs(volume: VolumeGrid4D, ideals: Sequence, acknowledged: bool) -> AssumptionReport:
    """Run every machine check and record the user obligations.

    The result's verdict is ``proceed`` only if all machine checks pass and
    ``acknowledged`` is true. Refusal is reported, never raised.
    """
    nt = volume.nt
    checks = [_positivity(volume)]

    wrong = [f"{s.label} (length {len(s.values)})" for s in ideals if len(s.values) != nt]
    if wrong:
        checks.append(AssumptionCheck(
            "GA.1.length_match", Kind.MACHINE, Status.FAIL,
            f"volume has {nt} frames; mismatched: " + ", ".join(wrong)))
    else:
        checks.append(AssumptionCheck("GA.1.length_match", Kind.MACHINE, Status.PASS))

    checks.append(AssumptionCheck(
        "GA.1.min_frames", Kind.MACHINE,
        Status.PASS if nt >= 2 else Status.FAIL,
        "" if nt >= 2 else f"volume has nt={nt}; at least 2 frames are needed"))

    checks.append(AssumptionCheck(
        "GA.1.ideal_supplied", Kind.MACHINE,
        Status.PASS if ideals else Status.FAIL,
        "" if ideals else "no ideal time series supplied"))

    status = Status.ACKNOWLEDGED if acknowledged else Status.UNACKNOWLEDGED
    for cid, statement in OBLIGATIONS:
        checks.append(AssumptionCheck(cid, Kind.USER_OBLIGATION, status, statement))
    return AssumptionReport(tuple(checks))
