"""Daily hourly-profile CSV files and the WHO threshold comparator.

File format: a header ``date,h00,...,h23`` then one row per day with an
ISO date and 24 hourly means. Empty cells, ``NA`` and ``nan`` mark missing
hours; up to four per day are filled by linear interpolation (nearest value
at the ends of the day), more and the day is skipped with a warning.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .curves import SampledCurve, TimeGrid, curve_from_samples
from .errors import ConfigurationError, ParseError

POLLUTANTS = ("CO", "NO", "NO2", "O3", "SO2")
HOURS = 24
HEADER = ["date"] + [f"h{k:02d}" for k in range(HOURS)]
MAX_MISSING = 4
MISSING_TOKENS = {"", "na", "nan", "null"}


class SkippedDayWarning(UserWarning):
    """A day was dropped because too many hours were missing."""


@dataclass(frozen=True, eq=False)
class DailyProfileRecord:
    date: dt.date
    pollutant: str
    values: np.ndarray
    filled_hours: tuple = ()

    def __post_init__(self):
        if self.pollutant not in POLLUTANTS:
            raise ConfigurationError(f"unknown pollutant {self.pollutant!r}; expected one of {POLLUTANTS}")
        values = np.array(self.values, dtype=float)
        if values.shape != (HOURS,):
            raise ParseError(f"expected {HOURS} hourly values, got {values.size}")
        if np.any(~np.isfinite(values)) or np.any(values < 0):
            raise ParseError("hourly values must be finite and nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "filled_hours", tuple(int(h) for h in self.filled_hours))

    def curve(self, grid: TimeGrid | None = None) -> SampledCurve:
        """Hour ``k`` at ``t = k / 23``, resampled to ``grid``."""
        return curve_from_samples(self.values, grid)


def fill_missing(values: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Linear interpolation over NaN hours; ends take the nearest observed value."""
    values = np.asarray(values, dtype=float)
    miss = np.isnan(values)
    if not miss.any():
        return values.copy(), ()
    hours = np.arange(values.size)
    out = values.copy()
    out[miss] = np.interp(hours[miss], hours[~miss], values[~miss])
    return out, tuple(np.flatnonzero(miss).tolist())


def _parse_value(token: str, lineno: int, col: str) -> float:
    if token.strip().lower() in MISSING_TOKENS:
        return math.nan
    try:
        v = float(token)
    except ValueError:
        raise ParseError(f"column {col}: not a number: {token!r}", line=lineno) from None
    if not math.isfinite(v):
        raise ParseError(f"column {col}: value must be finite", line=lineno)
    if v < 0:
        raise ParseError(f"column {col}: negative concentration {v}", line=lineno)
    return v


def ingest_csv(path, pollutant: str, max_missing: int = MAX_MISSING) -> list[DailyProfileRecord]:
    """Parse a daily profile file; records come back in date order."""
    if pollutant not in POLLUTANTS:
        raise ConfigurationError(f"unknown pollutant {pollutant!r}; expected one of {POLLUTANTS}")
    path = Path(path)
    records = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", line=1)
        if [h.strip() for h in header] != HEADER:
            raise ParseError("header must be date,h00,...,h23", line=1)
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != HOURS + 1:
                raise ParseError(f"expected {HOURS + 1} fields, got {len(row)}", line=lineno)
            try:
                date = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise ParseError(f"bad date {row[0]!r}", line=lineno) from None
            if date in records:
                raise ParseError(f"duplicate date {date}", line=lineno)
            raw = np.array([_parse_value(tok, lineno, HEADER[k + 1]) for k, tok in enumerate(row[1:])])
            n_missing = int(np.isnan(raw).sum())
            if n_missing > max_missing:
                warnings.warn(
                    f"line {lineno}: {date} has {n_missing} missing hours (max {max_missing}); day skipped",
                    SkippedDayWarning,
                    stacklevel=2,
                )
                continue
            values, filled = fill_missing(raw)
            records[date] = DailyProfileRecord(date, pollutant, values, filled)
    return [records[d] for d in sorted(records)]


def write_csv(records: Sequence[DailyProfileRecord], path) -> None:
    """Write records in the ingestion format; floats keep their exact repr."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in records:
            w.writerow([r.date.isoformat()] + [repr(float(v)) for v in r.values])


@dataclass(frozen=True)
class ThresholdRule:
    pollutant: str
    statistic: str
    limit: float

    def __post_init__(self):
        if self.statistic not in ("hourly_max", "rolling_8h_mean_max"):
            raise ConfigurationError(f"unknown statistic {self.statistic!r}")
        if not self.limit > 0:
            raise ConfigurationError("threshold limit must be positive")

    @property
    def label(self) -> str:
        return f"{self.pollutant}/{self.limit:g}"

    def statistic_value(self, values: np.ndarray) -> float:
        if self.statistic == "hourly_max":
            return float(np.max(values))
        return float(np.max(rolling_means(values, 8)))


def rolling_means(values: np.ndarray, window: int) -> np.ndarray:
    """Means of every run of ``window`` consecutive hours within the day."""
    return sliding_window_view(np.asarray(values, dtype=float), window).mean(axis=1)


WHO_RULES = {
    "CO": (ThresholdRule("CO", "rolling_8h_mean_max", 10.0),),
    "NO": (),
    "NO2": (ThresholdRule("NO2", "hourly_max", 400.0),),
    "O3": (ThresholdRule("O3", "hourly_max", 240.0),),
    "SO2": (ThresholdRule("SO2", "hourly_max", 500.0),),
}


@dataclass(frozen=True)
class WhoFlag:
    flagged: bool
    violated: tuple = ()
    statistics: dict = field(default_factory=dict)


def who_flag(record: DailyProfileRecord, rules: dict | None = None) -> WhoFlag:
    """A day is flagged when any rule of its pollutant is exceeded (strictly)."""
    rules = WHO_RULES if rules is None else rules
    violated, stats = [], {}
    for rule in rules.get(record.pollutant, ()):
        value = rule.statistic_value(record.values)
        stats[rule.label] = value
        if value > rule.limit:
            violated.append(rule.label)
    return WhoFlag(bool(violated), tuple(violated), stats)
