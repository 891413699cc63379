"""Hourly load/temperature series, calendar helpers and CSV ingestion.

Timestamps are timezone-naive UTC at hourly resolution and are held as
``numpy.datetime64[h]``. Missing load or temperature values are stored as NaN;
the NaN pattern *is* the missing-value mask and nothing is ever imputed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DataError

HOUR = np.timedelta64(1, "h")


class TimePoint(NamedTuple):
    timestamp: datetime
    load: float  # kW, NaN when missing
    temperature: float  # degC, NaN when missing


class IngestionError(DataError):
    """A row could not be parsed."""


class ConflictError(DataError):
    """Two rows share a timestamp."""


class ValidationError(DataError):
    """A parsed value violates a domain constraint (e.g. negative load)."""


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for :func:`ingest_csv`."""

    timestamp: str = "timestamp"
    load: str = "load_kw"
    temperature: str = "temp_c"


@dataclass(frozen=True, eq=False)
class LoadSeries:
    """Immutable hourly series of load and temperature observations.

    Arrays are copied and marked read-only on construction. ``timestamps`` must
    be strictly increasing; ingestion fills hourly gaps with explicit missing
    points, while filtered series (e.g. heating period only) may skip hours.
    """

    timestamps: np.ndarray
    load: np.ndarray
    temperature: np.ndarray
    meter_id: str = "meter"

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[h]").copy()
        load = np.asarray(self.load, dtype=float).copy()
        temp = np.asarray(self.temperature, dtype=float).copy()
        if not (ts.shape == load.shape == temp.shape) or ts.ndim != 1:
            raise ValueError("timestamps, load and temperature must be 1-d and equally long")
        if ts.size > 1 and not np.all(np.diff(ts) > np.timedelta64(0, "h")):
            raise ValueError("timestamps must be strictly increasing")
        if np.any(load[~np.isnan(load)] < 0):
            raise ValidationError("load must be nonnegative or missing")
        for arr in (ts, load, temp):
            arr.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "load", load)
        object.__setattr__(self, "temperature", temp)

    def __len__(self) -> int:
        return self.timestamps.size

    def __iter__(self) -> Iterator[TimePoint]:
        for ts, y, t in zip(self.timestamps.tolist(), self.load.tolist(), self.temperature.tolist()):
            yield TimePoint(ts, y, t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LoadSeries):
            return NotImplemented
        return (
            self.meter_id == other.meter_id
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.load, other.load, equal_nan=True)
            and np.array_equal(self.temperature, other.temperature, equal_nan=True)
        )

    @property
    def points(self) -> list[TimePoint]:
        return list(self)

    @property
    def load_missing(self) -> np.ndarray:
        return np.isnan(self.load)

    @property
    def temperature_missing(self) -> np.ndarray:
        return np.isnan(self.temperature)

    @property
    def days(self) -> np.ndarray:
        """Calendar day (``datetime64[D]``) of every point."""
        return self.timestamps.astype("datetime64[D]")

    @property
    def hours(self) -> np.ndarray:
        return (self.timestamps - self.days).astype(int)

    def subset(self, mask_or_index) -> "LoadSeries":
        return LoadSeries(
            self.timestamps[mask_or_index],
            self.load[mask_or_index],
            self.temperature[mask_or_index],
            self.meter_id,
        )

    def with_load(self, load: np.ndarray) -> "LoadSeries":
        return LoadSeries(self.timestamps, load, self.temperature, self.meter_id)

    def lag_positions(self, hours: int) -> np.ndarray:
        """Index of ``t - hours`` for every point, ``-1`` where that hour is absent."""
        target = self.timestamps - np.timedelta64(int(hours), "h")
        pos = np.searchsorted(self.timestamps, target)
        pos_c = np.minimum(pos, len(self) - 1)
        found = (pos < len(self)) & (self.timestamps[pos_c] == target)
        return np.where(found, pos_c, -1)

    def lagged(self, values: np.ndarray, hours: int) -> np.ndarray:
        """``values`` shifted by ``hours`` along the time axis, NaN where unavailable."""
        pos = self.lag_positions(hours)
        out = np.full(len(self), np.nan)
        ok = pos >= 0
        out[ok] = np.asarray(values, dtype=float)[pos[ok]]
        return out


@dataclass(frozen=True)
class HeatingPeriodSpec:
    """Inclusive month-day interval, possibly wrapping the year boundary."""

    start_month_day: tuple[int, int] = (9, 1)
    end_month_day: tuple[int, int] = (5, 31)

    def contains(self, days: np.ndarray) -> np.ndarray:
        days = np.asarray(days, dtype="datetime64[D]")
        months = days.astype("datetime64[M]")
        md = (months.astype(int) % 12 + 1) * 100 + (days - months).astype(int) + 1
        lo = self.start_month_day[0] * 100 + self.start_month_day[1]
        hi = self.end_month_day[0] * 100 + self.end_month_day[1]
        if lo <= hi:
            return (md >= lo) & (md <= hi)
        return (md >= lo) | (md <= hi)


def filter_heating_period(series: LoadSeries, spec: HeatingPeriodSpec = HeatingPeriodSpec()) -> LoadSeries:
    return series.subset(spec.contains(series.days))


def drop_incomplete(series: LoadSeries, required_lags: Iterable[int]) -> np.ndarray:
    """Indices whose observation and all lagged load/temperature inputs are present.

    The observation itself (load and temperature at ``t``) is always required;
    ``required_lags`` adds ``t - k`` hours for each ``k``.
    """
    ok = ~series.load_missing & ~series.temperature_missing
    for k in sorted(set(int(k) for k in required_lags)):
        if k == 0:
            continue
        pos = series.lag_positions(k)
        present = pos >= 0
        idx = np.where(present, pos, 0)
        ok &= present & ~series.load_missing[idx] & ~series.temperature_missing[idx]
    return np.flatnonzero(ok)


def _parse_float(text: str) -> float:
    text = text.strip()
    if not text:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        return math.nan
    return value if math.isfinite(value) else math.nan


def _parse_timestamp(text: str, row: int) -> np.datetime64:
    try:
        ts = datetime.fromisoformat(text.strip())
    except ValueError as exc:
        raise IngestionError(f"row {row}: malformed timestamp {text!r}") from exc
    if ts.tzinfo is not None:
        raise IngestionError(f"row {row}: timestamp {text!r} carries a timezone; expected naive UTC")
    if ts.minute or ts.second or ts.microsecond:
        raise IngestionError(f"row {row}: timestamp {text!r} is not hour-aligned")
    return np.datetime64(ts, "h")


def ingest_csv(path: str | Path, schema: CsvSchema = CsvSchema(), meter_id: str | None = None) -> LoadSeries:
    """Read an hourly CSV into a :class:`LoadSeries`.

    Unparseable or empty load/temperature cells become missing. Rows are sorted
    by timestamp and hourly gaps are filled with explicit missing points.
    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"{path}: no such file")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing_cols = [c for c in (schema.timestamp, schema.load, schema.temperature) if c not in header]
        if missing_cols:
            raise IngestionError(f"{path}: header lacks columns {missing_cols}")
        stamps, loads, temps, rows = [], [], [], []
        for row_no, row in enumerate(reader, start=2):
            ts = _parse_timestamp(row[schema.timestamp] or "", row_no)
            load = _parse_float(row[schema.load] or "")
            if load < 0:
                raise ValidationError(f"row {row_no}: negative load {load}")
            stamps.append(ts)
            loads.append(load)
            temps.append(_parse_float(row[schema.temperature] or ""))
            rows.append(row_no)
    if not stamps:
        raise IngestionError(f"{path}: no data rows")

    ts = np.array(stamps, dtype="datetime64[h]")
    order = np.argsort(ts, kind="stable")
    ts = ts[order]
    dup = np.flatnonzero(ts[1:] == ts[:-1])
    if dup.size:
        a, b = rows[order[dup[0]]], rows[order[dup[0] + 1]]
        raise ConflictError(f"rows {a} and {b} share timestamp {ts[dup[0]]}")

    grid = np.arange(ts[0], ts[-1] + HOUR, HOUR)
    pos = (ts - ts[0]).astype(int)
    load = np.full(grid.size, np.nan)
    temp = np.full(grid.size, np.nan)
    load[pos] = np.asarray(loads)[order]
    temp[pos] = np.asarray(temps)[order]
    return LoadSeries(grid, load, temp, meter_id or path.stem)


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_csv(series: LoadSeries, path: str | Path, schema: CsvSchema = CsvSchema()) -> None:
    """Inverse of :func:`ingest_csv`; floats are written with ``repr`` so they round-trip."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([schema.timestamp, schema.load, schema.temperature])
        for p in series:
            w.writerow([p.timestamp.isoformat(timespec="seconds"), _fmt(p.load), _fmt(p.temperature)])


def series_from_frame(timestamps: Sequence, load: Sequence[float], temperature: Sequence[float], meter_id: str = "meter") -> LoadSeries:
    return LoadSeries(np.asarray(timestamps, dtype="datetime64[h]"), np.asarray(load, float), np.asarray(temperature, float), meter_id)


def to_date(day: np.datetime64) -> date:
    return np.datetime64(day, "D").astype(date)
