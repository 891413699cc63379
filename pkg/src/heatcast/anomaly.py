"""Anomaly detection with predictive CDFs, artificial anomaly injection and the
repeated-injection ROC experiment.

An observation is anomalous when its predictive CDF value falls strictly
outside ``[tau_lower, tau_upper]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .metrics import RocCurve, confusion, rates
from .timeseries import LoadSeries

DEFAULT_SWEEP = (0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1, 0.15, 0.2, 0.25)
INJECTION_RATE = 0.05
DEVIATION = 0.2
N_RUNS = 30


@dataclass(frozen=True)
class DetectorConfig:
    tau_lower: float
    tau_upper: float | None = None

    def __post_init__(self):
        upper = 1.0 - self.tau_lower if self.tau_upper is None else self.tau_upper
        object.__setattr__(self, "tau_upper", float(upper))
        if not 0.0 < self.tau_lower < self.tau_upper < 1.0:
            raise ValueError(f"need 0 < tau_lower < tau_upper < 1, got ({self.tau_lower}, {self.tau_upper})")


def flag_cdf(f, config: DetectorConfig) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return (f < config.tau_lower) | (f > config.tau_upper)


def classify(dist, y, config: DetectorConfig) -> np.ndarray:
    """True where the observation lies outside the plausibility interval."""
    return flag_cdf(dist.cdf(y), config)


@dataclass(frozen=True)
class AnomalyInjection:
    positions: np.ndarray
    original: np.ndarray
    injected: np.ndarray
    directions: np.ndarray

    def __len__(self) -> int:
        return self.positions.size

    def apply(self, y) -> np.ndarray:
        out = np.array(y, dtype=float, copy=True)
        out[self.positions] = self.injected
        return out

    def truth(self, n: int) -> np.ndarray:
        mask = np.zeros(n, dtype=bool)
        mask[self.positions] = True
        return mask


def injection_count(n: int, rate: float = INJECTION_RATE) -> int:
    # round half up; Python's round() would send 2.5 to 2
    return int(np.floor(rate * n + 0.5))


def deviate(original, ybar: float, directions) -> tuple[np.ndarray, np.ndarray]:
    """Deviated values and the directions actually used.

    Magnitude is ``max(0.2 y, 0.2 ybar)``; a downward move that would go
    below zero is replaced by the upward one.
    """
    orig = np.asarray(original, dtype=float)
    dirs = np.asarray(directions, dtype=int)
    mag = np.maximum(DEVIATION * orig, DEVIATION * ybar)
    cand = orig + dirs * mag
    neg = cand < 0
    return np.where(neg, orig + mag, cand), np.where(neg, 1, dirs)


def inject(test, rate: float = INJECTION_RATE, rng: np.random.Generator | None = None, usable=None):
    """Replace ``round(rate * N)`` observations with deviated values.

    ``test`` is a load vector or a :class:`LoadSeries`; positions are drawn
    without replacement from the usable indices (finite load by default) and
    ``N`` counts those. Each deviation is ``max(0.2 y, 0.2 ybar)`` up or down
    with equal probability, forced upward when the result would be negative.
    Returns the modified input (same type) and the injection record.
    """
    rng = np.random.default_rng() if rng is None else rng
    y = test.load if isinstance(test, LoadSeries) else np.asarray(test, dtype=float)
    if usable is None:
        usable = np.flatnonzero(np.isfinite(y))
    else:
        usable = np.asarray(usable)
        if usable.dtype == bool:
            usable = np.flatnonzero(usable)
    if usable.size == 0:
        raise ValueError("no usable observations to inject into")
    ybar = float(np.mean(y[usable]))
    k = injection_count(usable.size, rate)
    pos = np.sort(rng.choice(usable, size=k, replace=False))
    orig = y[pos].copy()
    new, dirs = deviate(orig, ybar, np.where(rng.random(k) < 0.5, -1, 1))
    record = AnomalyInjection(pos, orig, new, dirs)
    modified = record.apply(y)
    if isinstance(test, LoadSeries):
        return test.with_load(modified), record
    return modified, record


@dataclass(frozen=True)
class DetectionOutcome:
    flags: np.ndarray
    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_flags(cls, flags, truth) -> "DetectionOutcome":
        flags = np.asarray(flags, dtype=bool)
        return cls(flags, *confusion(flags, truth))

    @property
    def tpr(self) -> float:
        return rates(self.tp, self.fp, self.fn, self.tn)[0]

    @property
    def fpr(self) -> float:
        return rates(self.tp, self.fp, self.fn, self.tn)[1]


@dataclass(frozen=True)
class RunRecord:
    model: str
    run: int
    tau_lower: float
    tp: int
    fp: int
    fn: int
    tn: int
    tpr: float
    fpr: float


@dataclass
class ExperimentResult:
    sweep: tuple
    records: list
    curves: dict

    def write_runs_csv(self, path: str | Path, header_comment: str | None = None) -> None:
        with Path(path).open("w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["model", "run", "tau_lower", "TP", "FP", "FN", "TN", "TPR", "FPR"])
            for r in self.records:
                w.writerow([r.model, r.run, repr(r.tau_lower), r.tp, r.fp, r.fn, r.tn, repr(r.tpr), repr(r.fpr)])

    def averaged_rows(self) -> list:
        rows = []
        for name, curve in self.curves.items():
            for t, fpr, tpr in zip(curve.tau_lower, curve.fpr, curve.tpr):
                rows.append((name, float(t), float(tpr), float(fpr)))
        return rows


def run_experiment(
    cdf_of: Mapping[str, Callable[[np.ndarray], np.ndarray]] | Callable[[np.ndarray], np.ndarray],
    y,
    runs: int = N_RUNS,
    sweep: Sequence[float] = DEFAULT_SWEEP,
    seed: int | np.random.SeedSequence = 0,
    rate: float = INJECTION_RATE,
) -> ExperimentResult:
    """Repeat inject-and-classify ``runs`` times and average TPR/FPR per threshold.

    ``cdf_of`` maps a model name to a function returning predictive CDF values
    at a vector of observations (a bare function is treated as one model).
    The forecasts themselves come from clean data; only the classified
    observations are perturbed. Within a run every model sees the same
    injection, and run ``r`` uses the ``r``-th child of ``seed``.
    """
    if not isinstance(cdf_of, Mapping):
        cdf_of = {"model": cdf_of}
    if len(sweep) == 0:
        raise ValueError("threshold sweep is empty")
    configs = [DetectorConfig(float(t)) for t in sweep]
    y = np.asarray(y, dtype=float)
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = seq.spawn(runs)
    records = []
    sums = {name: np.zeros((len(configs), 2)) for name in cdf_of}
    for r, child in enumerate(children):
        y_mod, record = inject(y, rate, np.random.default_rng(child))
        truth = record.truth(y.size)
        for name, fn in cdf_of.items():
            f = np.asarray(fn(y_mod), dtype=float)
            for k, cfg in enumerate(configs):
                out = DetectionOutcome.from_flags(flag_cdf(f, cfg), truth)
                tpr, fpr = out.tpr, out.fpr
                sums[name][k] += (tpr, fpr)
                records.append(RunRecord(name, r, cfg.tau_lower, out.tp, out.fp, out.fn, out.tn, tpr, fpr))
    tau = np.array([c.tau_lower for c in configs])
    curves = {name: RocCurve(tau, s[:, 1] / runs, s[:, 0] / runs) for name, s in sums.items()}
    return ExperimentResult(tuple(tau.tolist()), records, curves)
