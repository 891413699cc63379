"""Point and probabilistic scores, PIT histograms and ROC curves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .distributions import PredictiveDistribution

CRPS_SAMPLES = 1000
PIT_EDGES = np.round(np.linspace(0.0, 1.0, 11), 1)
_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)


def _pair(y, yhat):
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError("y and yhat must have equal length")
    if y.size == 0:
        raise ValueError("empty input")
    return y, np.maximum(yhat, 0.0)


def mae(y, yhat) -> float:
    """Mean absolute error of forecasts clipped at zero."""
    y, yp = _pair(y, yhat)
    return float(np.mean(np.abs(y - yp)))


def rmse(y, yhat) -> float:
    y, yp = _pair(y, yhat)
    return float(np.sqrt(np.mean((y - yp) ** 2)))


def crps_gaussian_closed(mu, sigma, y):
    """Closed-form CRPS of N(mu, sigma^2); reduces to |y - mu| as sigma -> 0."""
    mu, sigma, y = (np.asarray(a, dtype=float) for a in (mu, sigma, y))
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    safe = np.where(sigma > 0, sigma, 1.0)
    z = (y - mu) / safe
    val = safe * (z * (2 * special.ndtr(z) - 1) + 2 * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi) - _INV_SQRT_PI)
    return np.where(sigma > 0, val, np.abs(y - mu))


def crps_from_samples(samples, y) -> np.ndarray:
    """Sample CRPS estimator ``mean|X - y| - (1/2S^2) sum_ij |X_i - X_j|``.

    The double sum is evaluated exactly in O(S log S) through the sorted-sample
    identity ``sum_ij |X_i - X_j| = 2 sum_i (2i - S - 1) X_(i)``.
    """
    x = np.sort(np.asarray(samples, dtype=float), axis=-1)
    s = x.shape[-1]
    if s < 2:
        raise ValueError("need at least 2 samples")
    y = np.asarray(y, dtype=float)
    term1 = np.mean(np.abs(x - y[..., None]), axis=-1)
    weights = 2 * np.arange(1, s + 1) - s - 1
    pair_sum = 2 * (x * weights).sum(axis=-1)
    return term1 - pair_sum / (2.0 * s * s)


def crps_sample(dist: PredictiveDistribution, y, rng: np.random.Generator, s: int = CRPS_SAMPLES) -> np.ndarray:
    if s < 2:
        raise ValueError("need at least 2 samples")
    return crps_from_samples(dist.sample(s, rng), y)


def pit(dist: PredictiveDistribution, y, rng: np.random.Generator) -> np.ndarray:
    """PIT values; observations at a zero point mass get a uniform draw on [0, F(0)]."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("PIT needs nonnegative observations")
    f = np.asarray(dist.cdf(y), dtype=float)
    u = rng.random(np.shape(f))
    return np.where(y == 0, u * f, f)


@dataclass(frozen=True)
class PitHistogram:
    bin_edges: np.ndarray
    bin_frequencies: np.ndarray


def pit_histogram(values) -> PitHistogram:
    values = np.asarray(values, dtype=float)
    counts, _ = np.histogram(np.clip(values, 0.0, 1.0), bins=PIT_EDGES)
    return PitHistogram(PIT_EDGES.copy(), counts / counts.sum())


@dataclass(frozen=True)
class RocCurve:
    """One (FPR, TPR) point per lower threshold level, upper = 1 - lower."""

    tau_lower: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray

    def tpr_at(self, fpr: float) -> float:
        """TPR at a given FPR by linear interpolation, anchored at (0,0) and (1,1)."""
        order = np.lexsort((self.tpr, self.fpr))
        xs = np.concatenate([[0.0], self.fpr[order], [1.0]])
        ys = np.concatenate([[0.0], self.tpr[order], [1.0]])
        ys = np.maximum.accumulate(ys)
        return float(np.interp(fpr, xs, ys))


def confusion(flags, truth) -> tuple[int, int, int, int]:
    flags = np.asarray(flags, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = int(np.sum(flags & truth))
    fp = int(np.sum(flags & ~truth))
    fn = int(np.sum(~flags & truth))
    tn = int(np.sum(~flags & ~truth))
    return tp, fp, fn, tn


def rates(tp: int, fp: int, fn: int, tn: int) -> tuple[float, float]:
    if tp + fn == 0:
        raise ValueError("TPR undefined: no positives in the ground truth")
    fpr = fp / (fp + tn) if fp + tn else 0.0
    return tp / (tp + fn), fpr


def roc(flags_per_threshold: Sequence, truth, tau_lower: Sequence[float]) -> RocCurve:
    if len(flags_per_threshold) == 0:
        raise ValueError("threshold sweep is empty")
    if len(flags_per_threshold) != len(tau_lower):
        raise ValueError("one flag vector per threshold level required")
    tprs, fprs = [], []
    for flags in flags_per_threshold:
        tpr, fpr = rates(*confusion(flags, truth))
        tprs.append(tpr)
        fprs.append(fpr)
    return RocCurve(np.asarray(tau_lower, float), np.asarray(fprs), np.asarray(tprs))
