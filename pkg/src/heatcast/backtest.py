"""Rolling-window day-ahead forecasting, grid-search tuning and ensemble assembly.

Training windows are counted in *retained* days (days inside the heating
period), so a window that reaches back over the summer gap simply continues
with the previous heating season.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .features import FeatureMatrix, design
from .forecasters import fit_gam, fit_gbr, fit_lasso, predict_gam, predict_gbr, predict_lasso
from .timeseries import HeatingPeriodSpec, LoadSeries

log = logging.getLogger(__name__)

METHODS = ("lasso", "gbr", "gam")
WINDOWS = (60, 90, 365)
MEMBER_ORDER = tuple((method, days) for days in WINDOWS for method in METHODS)
MIN_USABLE_FRACTION = 0.5
DEFAULT_LAMBDAS = tuple(float(x) for x in np.logspace(-4, 2, 7))
DEFAULT_DEPTHS = (3, 4, 5, 6)


def member_name(method: str, days: int) -> str:
    return f"{method}_{days}"


@dataclass(frozen=True)
class WindowSpec:
    d_train: int

    def __post_init__(self):
        if self.d_train < 1:
            raise ValueError("d_train must be positive")

    @property
    def n_train(self) -> int:
        return 24 * self.d_train


@dataclass(frozen=True)
class TuningGrid:
    method: str
    candidates: tuple

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.candidates:
            raise ValueError("tuning grid is empty")

    def most_regularised_first(self) -> tuple:
        # larger lambda / shallower trees regularise more
        if self.method == "gbr":
            return tuple(sorted(self.candidates))
        return tuple(sorted(self.candidates, reverse=True))


def default_grid(method: str) -> TuningGrid:
    return TuningGrid(method, DEFAULT_DEPTHS if method == "gbr" else DEFAULT_LAMBDAS)


class DesignCache:
    """Design matrices and day bookkeeping for one series, computed once."""

    def __init__(self, series: LoadSeries, heating: HeatingPeriodSpec = HeatingPeriodSpec(), holidays: Iterable[date] = ()):
        self.series = series
        self.holidays = tuple(holidays)
        self._designs: dict = {}
        days = series.days
        uniq, first = np.unique(days, return_index=True)
        bounds = np.append(first, len(series))
        self._day_rows = {d: np.arange(bounds[i], bounds[i + 1]) for i, d in enumerate(uniq)}
        self.retained_days = uniq[heating.contains(uniq)]

    def design(self, kind: str, include_woy: bool = False):
        key = (kind, include_woy)
        if key not in self._designs:
            self._designs[key] = design(self.series, kind, include_woy, self.holidays)
        return self._designs[key]

    def for_member(self, method: str, window: WindowSpec):
        return self.design(method, include_woy=(method == "gam" and window.d_train >= 365))

    def day_rows(self, day) -> np.ndarray:
        return self._day_rows.get(np.datetime64(day, "D"), np.zeros(0, dtype=int))

    def training_days(self, day, window: WindowSpec) -> np.ndarray:
        """The ``d_train`` retained days strictly before ``day``."""
        k = np.searchsorted(self.retained_days, np.datetime64(day, "D"))
        return self.retained_days[max(0, k - window.d_train):k]

    def rows_of(self, days) -> np.ndarray:
        parts = [self.day_rows(d) for d in days]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=int)

    def matrix(self, names, full, rows) -> FeatureMatrix:
        rows = np.asarray(rows, dtype=int)
        vals = full[rows]
        target = self.series.load[rows]
        keep = np.isfinite(vals).all(axis=1) & np.isfinite(target)
        return FeatureMatrix(rows[keep], tuple(names), vals[keep], target[keep])


def _fit(method: str, fm: FeatureMatrix, tuned, include_woy: bool):
    if method == "lasso":
        return fit_lasso(fm, float(tuned))
    if method == "gbr":
        return fit_gbr(fm, int(tuned))
    if method == "gam":
        return fit_gam(fm, float(tuned), include_woy)
    raise ValueError(f"unknown method {method!r}")


def _predict(method: str, model, values: np.ndarray) -> np.ndarray:
    return {"lasso": predict_lasso, "gbr": predict_gbr, "gam": predict_gam}[method](model, values)


@dataclass(frozen=True)
class PointForecast:
    """Hourly forecasts aligned with series rows; NaN marks a missing forecast."""

    name: str
    rows: np.ndarray
    timestamps: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return self.rows.size


class LeakageError(AssertionError):
    pass


def rolling_day_ahead(
    series: LoadSeries | DesignCache,
    method: str,
    window: WindowSpec,
    tuned,
    target_days: Sequence,
    retrain_every: int = 1,
) -> PointForecast:
    """Retrain before each target day (or every ``retrain_every`` target days)
    on the preceding window and forecast all hours of the day.

    A window with fewer than half of its nominal ``24 * d_train`` rows usable
    yields missing forecasts for the days it would serve.
    """
    cache = series if isinstance(series, DesignCache) else DesignCache(series)
    names, full = cache.for_member(method, window)
    include_woy = method == "gam" and window.d_train >= 365
    target_days = [np.datetime64(d, "D") for d in target_days]
    out_rows, out_vals = [], []
    model = None
    for i, day in enumerate(target_days):
        if i % max(1, retrain_every) == 0:
            train = cache.matrix(names, full, cache.rows_of(cache.training_days(day, window)))
            model = None
            if len(train) >= MIN_USABLE_FRACTION * window.n_train:
                if len(train) and cache.series.timestamps[train.rows].max() >= np.datetime64(day, "h"):
                    raise LeakageError(f"training data reaches into target day {day}")
                try:
                    model = _fit(method, train, tuned, include_woy)
                except ValueError as exc:
                    log.warning("%s/%s fit failed before %s: %s", method, window.d_train, day, exc)
        rows = cache.day_rows(day)
        vals = np.full(rows.size, np.nan)
        if model is not None and rows.size:
            x = full[rows]
            ok = np.isfinite(x).all(axis=1)
            if ok.any():
                vals[ok] = _predict(method, model, x[ok])
        out_rows.append(rows)
        out_vals.append(vals)
    rows = np.concatenate(out_rows) if out_rows else np.zeros(0, dtype=int)
    vals = np.concatenate(out_vals) if out_vals else np.zeros(0)
    return PointForecast(member_name(method, window.d_train), rows, cache.series.timestamps[rows], vals)


def forecast_mae(forecast: PointForecast, series: LoadSeries) -> float:
    y = series.load[forecast.rows]
    ok = np.isfinite(y) & np.isfinite(forecast.values)
    if not ok.any():
        return float("nan")
    return float(np.mean(np.abs(y[ok] - np.maximum(forecast.values[ok], 0.0))))


@dataclass
class TuningResult:
    method: str
    window: WindowSpec
    best: object
    scores: dict = field(default_factory=dict)
    forecasts: dict = field(default_factory=dict)


def grid_search_tune(
    series: LoadSeries | DesignCache,
    method: str,
    window: WindowSpec,
    grid: TuningGrid,
    validation_days: Sequence,
    retrain_every: int = 1,
) -> TuningResult:
    """Pick the candidate with the lowest rolling validation MAE.

    Candidates are visited from most to least regularised and a later one
    must be strictly better to win, so ties go to the more regularised value.
    """
    cache = series if isinstance(series, DesignCache) else DesignCache(series)
    result = TuningResult(method, window, None)
    best_score = np.inf
    for cand in grid.most_regularised_first():
        fc = rolling_day_ahead(cache, method, window, cand, validation_days, retrain_every)
        score = forecast_mae(fc, cache.series)
        result.scores[cand] = score
        result.forecasts[cand] = fc
        if np.isfinite(score) and score < best_score:
            best_score = score
            result.best = cand
    if result.best is None:
        raise ValueError(f"every {method} candidate failed on the validation span")
    return result


@dataclass(frozen=True)
class EnsembleForecast:
    """Per-hour member forecasts (fixed member order) with their mean and sd."""

    rows: np.ndarray
    timestamps: np.ndarray
    members: np.ndarray
    member_names: tuple[str, ...]

    @property
    def mean(self) -> np.ndarray:
        return self.members.mean(axis=1)

    @property
    def sd(self) -> np.ndarray:
        return self.members.std(axis=1, ddof=1)

    def __len__(self) -> int:
        return self.rows.size

    def subset(self, mask) -> "EnsembleForecast":
        return EnsembleForecast(self.rows[mask], self.timestamps[mask], self.members[mask], self.member_names)

    def to_csv(self, path: str | Path, header_comment: str | None = None) -> None:
        with Path(path).open("w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["timestamp"] + [f"member_{i + 1}" for i in range(self.members.shape[1])] + ["ens_mean", "ens_sd"])
            for ts, m, mu, sd in zip(self.timestamps, self.members, self.mean, self.sd):
                w.writerow([str(np.datetime64(ts, "s")).replace(" ", "T")] + [repr(float(v)) for v in m] + [repr(float(mu)), repr(float(sd))])


def assemble_ensemble(members: Sequence[PointForecast]) -> EnsembleForecast:
    """Stack member forecasts; hours where any member is missing are dropped."""
    if not members:
        raise ValueError("no member forecasts")
    rows = members[0].rows
    for fc in members[1:]:
        if not np.array_equal(fc.rows, rows):
            raise ValueError(f"member {fc.name} is not aligned with {members[0].name}")
    stacked = np.column_stack([fc.values for fc in members])
    ok = np.isfinite(stacked).all(axis=1)
    return EnsembleForecast(rows[ok], members[0].timestamps[ok], stacked[ok], tuple(fc.name for fc in members))
