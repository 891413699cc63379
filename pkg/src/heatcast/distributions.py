"""Predictive distributions on ``[0, inf)``.

``ZeroMassGaussian`` and ``ZeroMassT`` move the probability a Gaussian or
Student-t would put below zero onto a point mass at exactly zero (this is not
truncation: the positive part keeps its shape). ``QuantileCdf`` interpolates a
sorted vector of 99 quantiles. All three hold array parameters with a batch
shape and evaluate element-wise, so one object can describe a whole test
period; ``sample`` appends a trailing axis of draws. Sampling is inverse
transform on stratified uniforms.

The Student-t CDF is ``scipy.special.stdtr`` (Cephes, regularised incomplete
beta). The test suite checks it against a 50-digit mpmath integral of the
density to 1e-10 absolute error for nu in [0.5, 1e6].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

LEVELS = np.round(np.arange(1, 100) / 100.0, 2)
_LOG_TINY = np.log(np.finfo(float).tiny)


def _check_tau(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if np.any((tau <= 0) | (tau >= 1)):
        raise ValueError("quantile level must lie strictly inside (0, 1)")
    return tau


def _stratified_uniforms(shape: tuple, count: int, rng: np.random.Generator) -> np.ndarray:
    """One uniform in each of ``count`` equal strata of [0, 1), shuffled along the last axis.

    Every draw is marginally U(0, 1), but the set is spread evenly, which
    brings the sample CRPS estimator error from O(1/sqrt(S)) down to O(1/S).
    """
    u = (np.arange(count) + rng.random(shape + (count,))) / count
    return rng.permuted(u, axis=-1)


def _with_trailing(param: np.ndarray, ndim: int) -> np.ndarray:
    return param.reshape(param.shape + (1,) * (ndim - param.ndim)) if ndim > param.ndim else param


class _ZeroMass:
    """Location-scale family with its negative mass relocated to zero."""

    def _std_cdf(self, z):
        raise NotImplementedError

    def _std_ppf(self, p):
        raise NotImplementedError

    @property
    def shape(self) -> tuple:
        return np.broadcast(self.mu, self.sigma).shape

    @property
    def prob_zero(self) -> np.ndarray:
        return self._std_cdf(-self.mu / self.sigma)

    def cdf(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.where(y < 0, 0.0, self._std_cdf((np.maximum(y, 0.0) - self.mu) / self.sigma))

    def _ppf(self, tau: np.ndarray) -> np.ndarray:
        # tau may be 0 for uniform draws; the point mass absorbs it
        nd = max(tau.ndim, len(self.shape))
        mu, sigma = _with_trailing(self.mu, nd), _with_trailing(self.sigma, nd)
        p0 = self._std_cdf(-mu / sigma)
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = mu + sigma * self._std_ppf(tau)
        return np.where(tau <= p0, 0.0, np.maximum(inner, 0.0))

    def quantile(self, tau) -> np.ndarray:
        return self._ppf(_check_tau(tau))

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return self._ppf(_stratified_uniforms(self.shape, int(count), rng))

    def _params(self, idx):
        mu, sigma = np.broadcast_arrays(self.mu, self.sigma)
        return mu[idx], sigma[idx]


@dataclass(frozen=True, eq=False)
class ZeroMassGaussian(_ZeroMass):
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if np.any(~(sigma > 0)):
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "sigma", sigma)

    def _std_cdf(self, z):
        return special.ndtr(z)

    def _std_ppf(self, p):
        return special.ndtri(p)

    def __getitem__(self, idx) -> "ZeroMassGaussian":
        return ZeroMassGaussian(*self._params(idx))

    def to_dict(self) -> dict:
        return {
            "family": "zero_mass_gaussian",
            "mu": np.ravel(self.mu).tolist(),
            "sigma": np.ravel(self.sigma).tolist(),
        }


@dataclass(frozen=True, eq=False)
class ZeroMassT(_ZeroMass):
    mu: np.ndarray
    sigma: np.ndarray
    nu: float

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if np.any(~(sigma > 0)):
            raise ValueError("sigma must be positive")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "nu", float(self.nu))

    def _std_cdf(self, z):
        return special.stdtr(self.nu, z)

    def _std_ppf(self, p):
        return special.stdtrit(self.nu, p)

    def __getitem__(self, idx) -> "ZeroMassT":
        return ZeroMassT(*self._params(idx), self.nu)

    def to_dict(self) -> dict:
        return {
            "family": "zero_mass_t",
            "mu": np.ravel(self.mu).tolist(),
            "sigma": np.ravel(self.sigma).tolist(),
            "nu": self.nu,
        }


@dataclass(frozen=True, eq=False)
class QuantileCdf:
    """CDF interpolating quantiles at levels 0.01, ..., 0.99.

    ``values`` carries the levels on its last axis. Construction clips
    negative values to zero and sorts. Between stored quantiles the CDF is
    linear; below the first quantile it falls linearly to 0 over one median
    inter-quantile spacing (never below y = 0), and above the last it rises
    to 1 over the same spacing. Tied quantiles give a vertical step.
    """

    values: np.ndarray

    levels = LEVELS

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[-1:] != LEVELS.shape:
            raise ValueError(f"expected {LEVELS.size} quantiles on the last axis, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("quantile values must be finite")
        object.__setattr__(self, "values", np.sort(np.maximum(v, 0.0), axis=-1))

    @property
    def shape(self) -> tuple:
        return self.values.shape[:-1]

    @property
    def spacing(self) -> np.ndarray:
        return np.median(np.diff(self.values, axis=-1), axis=-1)

    def knots(self) -> tuple[np.ndarray, np.ndarray]:
        """Breakpoints ``x`` (batch + (101,)) and probabilities ``p`` (101,) of the piecewise-linear CDF."""
        h = self.spacing
        lo = np.maximum(self.values[..., 0] - h, 0.0)
        hi = self.values[..., -1] + h
        x = np.concatenate([lo[..., None], self.values, hi[..., None]], axis=-1)
        p = np.concatenate([[0.0], LEVELS, [1.0]])
        return x, p

    def cdf(self, y) -> np.ndarray:
        x, p = self.knots()
        y = np.asarray(y, dtype=float)
        shape = np.broadcast_shapes(y.shape, self.shape)
        y = np.broadcast_to(y, shape)
        x = np.broadcast_to(x, shape + x.shape[-1:])
        # k = number of breakpoints <= y (right-continuous at ties)
        k = (x <= y[..., None]).sum(axis=-1)
        kk = np.clip(k, 1, p.size - 1)
        x0 = np.take_along_axis(x, (kk - 1)[..., None], -1)[..., 0]
        x1 = np.take_along_axis(x, kk[..., None], -1)[..., 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            lin = p[kk - 1] + (y - x0) / (x1 - x0) * (p[kk] - p[kk - 1])
        return np.where(k == 0, 0.0, np.where(k >= p.size, 1.0, lin))

    def _ppf(self, tau: np.ndarray) -> np.ndarray:
        # generalised inverse inf{y : F(y) >= tau}
        x, p = self.knots()
        extra = tau.ndim > len(self.shape)
        if not extra:
            tau = np.broadcast_to(tau, self.shape)
        j = np.clip(np.searchsorted(p, tau, side="left"), 1, p.size - 1)
        frac = (tau - p[j - 1]) / (p[j] - p[j - 1])
        jj = j if extra else j[..., None]
        x0 = np.take_along_axis(x, jj - 1, -1)
        x1 = np.take_along_axis(x, jj, -1)
        if not extra:
            x0, x1 = x0[..., 0], x1[..., 0]
        return x0 + frac * (x1 - x0)

    def quantile(self, tau) -> np.ndarray:
        return self._ppf(_check_tau(tau))

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return self._ppf(_stratified_uniforms(self.shape, int(count), rng))

    @property
    def prob_zero(self) -> np.ndarray:
        return self.cdf(0.0)

    def __getitem__(self, idx) -> "QuantileCdf":
        return QuantileCdf(self.values[idx])

    def to_dict(self) -> dict:
        return {"family": "quantile_cdf", "levels": LEVELS.tolist(), "values": self.values.tolist()}


PredictiveDistribution = Union[ZeroMassGaussian, ZeroMassT, QuantileCdf]


def cdf(dist: PredictiveDistribution, y) -> np.ndarray:
    return dist.cdf(y)


def quantile(dist: PredictiveDistribution, tau) -> np.ndarray:
    return dist.quantile(tau)


def sample(dist: PredictiveDistribution, count: int, rng: np.random.Generator) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be at least 1")
    return dist.sample(count, rng)


def from_dict(d: dict) -> PredictiveDistribution:
    family = d["family"]
    if family == "zero_mass_gaussian":
        return ZeroMassGaussian(np.asarray(d["mu"]), np.asarray(d["sigma"]))
    if family == "zero_mass_t":
        return ZeroMassT(np.asarray(d["mu"]), np.asarray(d["sigma"]), d["nu"])
    if family == "quantile_cdf":
        return QuantileCdf(np.asarray(d["values"]))
    raise ValueError(f"unknown distribution family {family!r}")


def t_logpdf(z, nu):
    """Log density of the standard Student-t."""
    z = np.asarray(z, dtype=float)
    return (
        special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2) - 0.5 * np.log(nu * np.pi)
        - (nu + 1) / 2 * np.log1p(z * z / nu)
    )


def t_logcdf(z, nu):
    """Log CDF of the standard Student-t, floored at log of the smallest normal double."""
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(special.stdtr(nu, z)), _LOG_TINY)


def censored_t_loglik(y, mu, sigma, nu: float) -> float:
    """Log-likelihood of observations under the zero-censored t.

    Positive observations contribute the scaled t log density, zeros the log
    probability of the censored region ``F_t(-mu / sigma)``.
    """
    y = np.asarray(y, dtype=float)
    mu = np.broadcast_to(np.asarray(mu, float), y.shape)
    sigma = np.broadcast_to(np.asarray(sigma, float), y.shape)
    if np.any(y < 0):
        raise ValueError("negative observation in a zero-censored likelihood")
    if np.any(~(sigma > 0)) or not nu > 0:
        raise ValueError("sigma and nu must be positive")
    pos = y > 0
    total = np.sum(t_logpdf((y[pos] - mu[pos]) / sigma[pos], nu) - np.log(sigma[pos]))
    total += np.sum(t_logcdf(-mu[~pos] / sigma[~pos], nu))
    return float(total)
