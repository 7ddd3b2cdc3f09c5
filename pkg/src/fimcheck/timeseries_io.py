"""Plain-text ideal time series (one value per line, ``#`` comments)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Tuple


class SeriesError(ValueError):
    pass


class EmptySeries(SeriesError):
    pass


class NonNumericToken(SeriesError):
    def __init__(self, line: int, token: str):
        self.line = line
        self.token = token
        super().__init__(f"line {line}: not a number: {token!r}")


class NonFiniteValue(SeriesError):
    def __init__(self, line: int, token: str):
        self.line = line
        super().__init__(f"line {line}: non-finite value {token!r}")


class ConstantSeries(SeriesError):
    pass


@dataclass(frozen=True)
class IdealSeries:
    label: str
    values: Tuple[float, ...]

    def __len__(self):
        return len(self.values)


def parse_1d(text: str | Iterable[str], label: str = "ideal") -> IdealSeries:
    lines = text.splitlines() if isinstance(text, str) else list(text)
    values = []
    for lineno, line in enumerate(lines, start=1):
        token = line.strip()
        if not token or token.startswith("#"):
            continue
        try:
            v = float(token)
        except ValueError:
            raise NonNumericToken(lineno, token) from None
        if not math.isfinite(v):
            raise NonFiniteValue(lineno, token)
        values.append(v)
    if not values:
        raise EmptySeries(f"{label}: no values")
    # a single value is trivially constant
    if all(v == values[0] for v in values):
        raise ConstantSeries(f"{label}: all {len(values)} values equal {values[0]!r}; correlation is undefined")
    return IdealSeries(label=label, values=tuple(values))


def render_1d(series: IdealSeries) -> str:
    return "".join(f"{v!r}\n" for v in series.values)


def read_1d(path) -> IdealSeries:
    path = Path(path)
    return parse_1d(path.read_text(), label=path.stem)
