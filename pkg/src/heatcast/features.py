"""Regressors for the three point forecasters.

Every ``*_design`` function returns the full design for all points of a series
(NaN wherever an input is missing); ``build_*_features`` index into it. Lags are
looked up by timestamp, so a filtered series with skipped hours yields NaN
lags rather than silently shifted ones.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .timeseries import LoadSeries

HDH_BASE_C = 18.0
WORK_START, WORK_END = 9, 17

LASSO_COLUMNS = (
    "load_lag24", "load_lag48", "load_lag72", "load_lag96", "load_lag120", "load_lag144", "load_lag168",
    "temp", "temp_lag24", "temp_peak_prev", "temp_avg_day",
    "load_peak_prev", "load_avg_prev",
    "hdh_avg_prev", "hdh_avg_day", "hdh_lag24",
    "working_day", "working_time",
)
GBR_COLUMNS = (
    "load_lag24", "load_lag48", "load_lag72", "load_lag168", "load_peak_prev", "load_avg_prev",
    "temp", "temp_lag24", "temp_peak_prev", "hdh_avg_day", "hdh",
    "hour_of_day", "day_of_week", "week_of_year",
)
DOW_DUMMIES = ("dow_mon", "dow_tue", "dow_wed", "dow_thu", "dow_fri", "dow_sat")
GAM_SPLINE_COLUMNS = ("load_lag24", "load_lag168", "load_peak_prev", "temp", "temp_avg_prev", "hour_of_day")
LAGS_BY_MODEL = {
    "lasso": (24, 48, 72, 96, 120, 144, 168),
    "gbr": (24, 48, 72, 168),
    "gam": (24, 168),
}


def gam_columns(include_woy: bool) -> tuple[str, ...]:
    woy = ("week_of_year",) if include_woy else ()
    return GAM_SPLINE_COLUMNS + woy + DOW_DUMMIES


def hdh(temperature):
    """Heating degree hours ``max(18 - T, 0)``; works on scalars and arrays."""
    return np.maximum(HDH_BASE_C - np.asarray(temperature, dtype=float), 0.0) + 0.0


@dataclass(frozen=True)
class DailyAggregates:
    day: date
    load_peak: float
    load_avg: float
    temp_peak: float
    temp_avg: float
    hdh_avg: float


@dataclass(frozen=True)
class CalendarFeatures:
    hod: int
    dow: int
    woy: int
    is_working_day: bool
    is_working_time: bool


def _daily_table(series: LoadSeries) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Unique days and per-day aggregates; a day lacking any of its 24 hours of a
    variable gets NaN for that variable's aggregates."""
    days = series.days
    uniq, inv = np.unique(days, return_inverse=True)
    n_days = uniq.size
    hours = series.hours
    out = {}
    for name, values in (("load", series.load), ("temp", series.temperature), ("hdh", hdh(series.temperature))):
        grid = np.full((n_days, 24), np.nan)
        grid[inv, hours] = values
        complete = ~np.isnan(grid).any(axis=1)
        peak = np.full(n_days, np.nan)
        avg = np.full(n_days, np.nan)
        peak[complete] = grid[complete].max(axis=1)
        avg[complete] = grid[complete].mean(axis=1)
        out[f"{name}_peak"] = peak
        out[f"{name}_avg"] = avg
    return uniq, out


def daily_aggregates(series: LoadSeries) -> list[DailyAggregates]:
    uniq, agg = _daily_table(series)
    return [
        DailyAggregates(
            uniq[i].astype(date), agg["load_peak"][i], agg["load_avg"][i],
            agg["temp_peak"][i], agg["temp_avg"][i], agg["hdh_avg"][i],
        )
        for i in range(uniq.size)
    ]


def _per_point(series: LoadSeries, uniq: np.ndarray, values: np.ndarray, day_offset: int) -> np.ndarray:
    """Daily value of day(t) - day_offset, broadcast to every point."""
    want = series.days - np.timedelta64(day_offset, "D")
    pos = np.searchsorted(uniq, want)
    pos_c = np.minimum(pos, uniq.size - 1)
    found = (pos < uniq.size) & (uniq[pos_c] == want)
    return np.where(found, values[pos_c], np.nan)


def _iso_week(days: np.ndarray) -> np.ndarray:
    uniq, inv = np.unique(days, return_inverse=True)
    weeks = np.array([d.isocalendar()[1] for d in uniq.astype(date)], dtype=float)
    return weeks[inv]


def calendar_columns(series: LoadSeries, holidays: Iterable[date] = ()) -> dict[str, np.ndarray]:
    days = series.days
    hod = series.hours.astype(float)
    # 1970-01-01 was a Thursday
    dow = ((days.astype(int) + 3) % 7).astype(float)
    hol = np.isin(days, np.array(list(holidays), dtype="datetime64[D]"))
    wd = (dow < 5) & ~hol
    wt = wd & (hod >= WORK_START) & (hod < WORK_END)
    return {
        "hour_of_day": hod,
        "day_of_week": dow,
        "week_of_year": _iso_week(days),
        "working_day": wd.astype(float),
        "working_time": wt.astype(float),
    }


def calendar_features(series: LoadSeries, index: int, holidays: Iterable[date] = ()) -> CalendarFeatures:
    cols = calendar_columns(series.subset(slice(index, index + 1)), holidays)
    return CalendarFeatures(
        int(cols["hour_of_day"][0]), int(cols["day_of_week"][0]), int(cols["week_of_year"][0]),
        bool(cols["working_day"][0]), bool(cols["working_time"][0]),
    )


def _all_columns(series: LoadSeries, holidays: Iterable[date] = ()) -> dict[str, np.ndarray]:
    uniq, agg = _daily_table(series)
    y, temp = series.load, series.temperature
    cols = {f"load_lag{24 * i}": series.lagged(y, 24 * i) for i in range(1, 8)}
    cols.update(
        temp=temp.astype(float),
        temp_lag24=series.lagged(temp, 24),
        temp_peak_prev=_per_point(series, uniq, agg["temp_peak"], 1),
        temp_avg_day=_per_point(series, uniq, agg["temp_avg"], 0),
        temp_avg_prev=_per_point(series, uniq, agg["temp_avg"], 1),
        load_peak_prev=_per_point(series, uniq, agg["load_peak"], 1),
        load_avg_prev=_per_point(series, uniq, agg["load_avg"], 1),
        hdh_avg_prev=_per_point(series, uniq, agg["hdh_avg"], 1),
        hdh_avg_day=_per_point(series, uniq, agg["hdh_avg"], 0),
        hdh=hdh(temp),
        hdh_lag24=hdh(series.lagged(temp, 24)),
    )
    cols.update(calendar_columns(series, holidays))
    dow = cols["day_of_week"]
    for k, name in enumerate(DOW_DUMMIES):
        cols[name] = (dow == k).astype(float)
    return cols


def design(series: LoadSeries, kind: str, include_woy: bool = False, holidays: Iterable[date] = ()) -> tuple[tuple[str, ...], np.ndarray]:
    """Column names and the (n_points, n_columns) design for ``kind`` in {lasso, gbr, gam}."""
    names = {"lasso": LASSO_COLUMNS, "gbr": GBR_COLUMNS}.get(kind)
    if kind == "gam":
        names = gam_columns(include_woy)
    if names is None:
        raise ValueError(f"unknown feature set {kind!r}")
    cols = _all_columns(series, holidays)
    return names, np.column_stack([cols[c] for c in names])


def build_lasso_features(series: LoadSeries, target_index, holidays: Iterable[date] = ()) -> np.ndarray:
    return design(series, "lasso", holidays=holidays)[1][target_index]


def build_gbr_features(series: LoadSeries, target_index, holidays: Iterable[date] = ()) -> np.ndarray:
    return design(series, "gbr", holidays=holidays)[1][target_index]


def build_gam_features(series: LoadSeries, target_index, include_woy: bool, holidays: Iterable[date] = ()) -> np.ndarray:
    return design(series, "gam", include_woy=include_woy, holidays=holidays)[1][target_index]


@dataclass(frozen=True)
class FeatureMatrix:
    """Design rows aligned with target hours; contains no missing values."""

    rows: np.ndarray
    column_names: tuple[str, ...]
    values: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.rows.size, len(self.column_names)):
            raise ValueError("values shape does not match rows x column_names")
        if not np.isfinite(self.values).all():
            raise ValueError("feature matrix contains missing values")

    def __len__(self) -> int:
        return self.rows.size

    @classmethod
    def from_arrays(cls, values, target, column_names: Sequence[str] | None = None) -> "FeatureMatrix":
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if column_names is None:
            column_names = tuple(f"x{j}" for j in range(values.shape[1]))
        return cls(np.arange(values.shape[0]), tuple(column_names), values, np.asarray(target, dtype=float))

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("row",) + tuple(self.column_names) + ("target",))
            for r, vals, t in zip(self.rows, self.values, self.target):
                w.writerow([int(r)] + [repr(float(v)) for v in vals] + [repr(float(t))])


def feature_matrix(names: Sequence[str], full: np.ndarray, series: LoadSeries, rows: np.ndarray) -> FeatureMatrix:
    """Select ``rows`` of a precomputed design, keeping only rows with complete inputs and target."""
    rows = np.asarray(rows, dtype=int)
    vals = full[rows]
    target = series.load[rows]
    keep = np.isfinite(vals).all(axis=1) & np.isfinite(target)
    return FeatureMatrix(rows[keep], tuple(names), vals[keep], target[keep])
