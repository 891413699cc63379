"""Probabilistic combination of the point-forecast ensemble, plus two benchmarks.

Every ``fit_*`` takes a :class:`CombinerWindow` (the trailing training pairs)
and returns an immutable model whose ``predict`` yields a distribution on
``[0, inf)`` for a batch of hours.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.linalg import qr
from scipy.optimize import linprog, minimize

from .distributions import LEVELS, QuantileCdf, ZeroMassGaussian, ZeroMassT, t_logcdf, t_logpdf
from .errors import NumericError
from .forecasters.bspline import SplineBasis, cumulative_map, difference_matrix
from .forecasters.gbr import BoostedTreesModel, Loss, fit_gbr, predict_gbr

log = logging.getLogger(__name__)

SIGMA_FLOOR_REL = 1e-6
GAMLSS_KNOTS = 20
GAMLSS_PENALTY = 1.0
GAMLSS_MAX_ITER = 500
GAMLSS_TOL = 1e-8
_LOG_NU_BOUNDS = (np.log(0.1), np.log(1e6))


def _members_of(ens) -> np.ndarray:
    members = getattr(ens, "members", ens)
    return np.atleast_2d(np.asarray(members, dtype=float))


@dataclass(frozen=True)
class CombinerWindow:
    """Aligned training pairs (ensemble member forecasts, observed load)."""

    members: np.ndarray
    y: np.ndarray
    y_lag24: np.ndarray | None = None

    def __post_init__(self):
        members = np.atleast_2d(np.asarray(self.members, dtype=float))
        y = np.asarray(self.y, dtype=float)
        if members.shape[0] != y.size:
            raise ValueError("members and observations are not aligned")
        if np.any(y < 0) or not np.isfinite(y).all():
            raise ValueError("observations must be finite and nonnegative")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "y", y)
        if self.y_lag24 is not None:
            lag = np.asarray(self.y_lag24, dtype=float)
            if lag.shape != y.shape:
                raise ValueError("y_lag24 is not aligned with y")
            object.__setattr__(self, "y_lag24", lag)

    def __len__(self) -> int:
        return self.y.size

    @property
    def mean(self) -> np.ndarray:
        return self.members.mean(axis=1)

    @property
    def sd(self) -> np.ndarray:
        return self.members.std(axis=1, ddof=1)

    @property
    def sigma_floor(self) -> float:
        return SIGMA_FLOOR_REL * max(float(self.y.mean()), 1e-12)


def _residual_sigma(resid: np.ndarray, floor: float) -> tuple[float, bool]:
    if resid.size < 2:
        raise ValueError("need at least 2 training pairs")
    var = float(np.sum(resid**2) / (resid.size - 1))
    sigma = np.sqrt(var)
    return (sigma, False) if sigma > floor else (floor, True)


@dataclass(frozen=True)
class ConstantSigmaRule:
    """Gaussian-with-zero-mass rule with a fixed standard deviation."""

    name: str
    sigma: float
    floored: bool = False

    def predict(self, location) -> ZeroMassGaussian:
        loc = np.asarray(location, dtype=float)
        return ZeroMassGaussian(loc, np.full(loc.shape, self.sigma))


def fit_ea(window: CombinerWindow) -> ConstantSigmaRule:
    """Ensemble mean with the in-sample residual variance (divisor N-1)."""
    sigma, floored = _residual_sigma(window.y - window.mean, window.sigma_floor)
    return ConstantSigmaRule("EA", sigma, floored)


def predict_ea(rule: ConstantSigmaRule, ens) -> ZeroMassGaussian:
    return rule.predict(_members_of(ens).mean(axis=1))


@dataclass(frozen=True)
class EaEvRule:
    sigma_floor: float

    def predict(self, ens) -> ZeroMassGaussian:
        m = _members_of(ens)
        sd = m.std(axis=1, ddof=1)
        return ZeroMassGaussian(m.mean(axis=1), np.maximum(sd, self.sigma_floor))


def fit_ea_ev(window: CombinerWindow) -> EaEvRule:
    """Stateless apart from the sigma floor: N0(ensemble mean, ensemble variance)."""
    return EaEvRule(window.sigma_floor)


def fit_naive(window: CombinerWindow) -> ConstantSigmaRule:
    if window.y_lag24 is None:
        raise ValueError("naive benchmark needs y_lag24 in the window")
    ok = np.isfinite(window.y_lag24)
    sigma, floored = _residual_sigma(window.y[ok] - window.y_lag24[ok], window.sigma_floor)
    return ConstantSigmaRule("Naive", sigma, floored)


def predict_naive(rule: ConstantSigmaRule, y_lag24) -> ZeroMassGaussian:
    return rule.predict(y_lag24)


# -- GAMLSS ---------------------------------------------------------------


@dataclass(frozen=True)
class GamlssCombiner:
    """Zero-censored t with linear location and monotone-spline log scale.

    ``mu = beta[0] + members @ beta[1:]`` and
    ``log sigma = sigma_intercept + f(ensemble sd)``, ``f`` a cubic B-spline on
    ``n_knots`` equidistant knots with nondecreasing coefficients. Under
    ``fallback`` the EA parameters are used and predictions are Gaussian.
    """

    beta: np.ndarray
    sigma_intercept: float
    spline: SplineBasis
    spline_coefficients: np.ndarray
    nu: float
    fallback: bool = False
    converged: bool = True
    n_iter: int = 0
    loglik: float = float("nan")
    message: str = ""

    def log_sigma(self, sd) -> np.ndarray:
        return self.sigma_intercept + self.spline.matrix(np.asarray(sd, float)) @ self.spline_coefficients

    def predict(self, ens):
        m = _members_of(ens)
        mu = self.beta[0] + m @ self.beta[1:]
        sd = m.std(axis=1, ddof=1)
        sigma = np.exp(self.log_sigma(sd))
        if self.fallback:
            return ZeroMassGaussian(mu, sigma)
        return ZeroMassT(mu, sigma, self.nu)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "sigma_intercept": self.sigma_intercept,
            "spline": {"lo": self.spline.lo, "hi": self.spline.hi, "n_basis": self.spline.n_basis},
            "spline_coefficients": self.spline_coefficients.tolist(),
            "nu": self.nu,
            "fallback": self.fallback,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "loglik": self.loglik,
        }


def predict_gamlss(model: GamlssCombiner, ens):
    return model.predict(ens)


def _gamlss_fallback(window: CombinerWindow, basis: SplineBasis, reason: str) -> GamlssCombiner:
    ea = fit_ea(window)
    m = window.members.shape[1]
    beta = np.concatenate([[0.0], np.full(m, 1.0 / m)])
    log.info("GAMLSS fallback to EA parameters: %s", reason)
    return GamlssCombiner(
        beta, float(np.log(ea.sigma)), basis, np.zeros(basis.n_basis), float("inf"),
        fallback=True, converged=False, message=reason,
    )


def _censored_t_objective(theta, X, B, D, y, pos, penalty, n_beta):
    """Mean negative penalised log-likelihood and its gradient."""
    n = y.size
    beta = theta[:n_beta]
    gamma0 = theta[n_beta]
    d = theta[n_beta + 1:-1]
    nu = np.exp(theta[-1])
    mu = X @ beta
    log_sigma = gamma0 + B @ d
    sigma = np.exp(log_sigma)
    z = (y - mu) / sigma

    g_mu = np.empty(n)
    g_ls = np.empty(n)
    zp = z[pos]
    q = nu + zp * zp
    ll_pos = t_logpdf(zp, nu) - log_sigma[pos]
    g_mu[pos] = (nu + 1) * zp / (sigma[pos] * q)
    g_ls[pos] = -1.0 + (nu + 1) * zp * zp / q
    dnu_pos = (
        0.5 * (special.digamma((nu + 1) / 2) - special.digamma(nu / 2)) - 0.5 / nu
        - 0.5 * np.log1p(zp * zp / nu) + (nu + 1) * zp * zp / (2 * nu * q)
    )
    neg = ~pos
    z0 = -mu[neg] / sigma[neg]
    ll_neg = t_logcdf(z0, nu)
    hazard = np.exp(t_logpdf(z0, nu) - ll_neg)
    g_mu[neg] = -hazard / sigma[neg]
    g_ls[neg] = -hazard * z0
    if neg.any():
        h = 1e-5 * nu
        dnu_neg = (t_logcdf(z0, nu + h) - t_logcdf(z0, nu - h)) / (2 * h)
    else:
        dnu_neg = np.zeros(0)

    c = D @ d
    loglik = ll_pos.sum() + ll_neg.sum()
    f = -(loglik - penalty * c @ c) / n
    grad = np.empty_like(theta)
    grad[:n_beta] = -(X.T @ g_mu) / n
    grad[n_beta] = -g_ls.sum() / n
    grad[n_beta + 1:-1] = -(B.T @ g_ls - 2 * penalty * D.T @ c) / n
    grad[-1] = -(dnu_pos.sum() + dnu_neg.sum()) * nu / n
    return f, grad


def fit_gamlss(
    window: CombinerWindow,
    penalty: float = GAMLSS_PENALTY,
    n_knots: int = GAMLSS_KNOTS,
    max_iter: int = GAMLSS_MAX_ITER,
    tol: float = GAMLSS_TOL,
) -> GamlssCombiner:
    """Maximum penalised likelihood under the zero-censored t.

    Fitted in units of the window's mean load (coefficients on members are
    scale-free; intercepts are mapped back). Initialisation: OLS location,
    log residual sd, spline increments exp(-10), nu = 10. L-BFGS-B stops when
    the relative improvement of the mean objective drops below ``tol``;
    hitting ``max_iter`` triggers the EA fallback.
    """
    m = window.members.shape[1]
    n_basis = n_knots + 2
    n_min = 30 * (m + 2)
    scale = max(float(window.y.mean()), 1e-12)
    sd = window.sd
    basis = SplineBasis.over(sd / scale, n_basis)
    phys_basis = SplineBasis(basis.lo * scale, basis.hi * scale, n_basis)
    if len(window) < n_min:
        raise ValueError(f"GAMLSS needs at least {n_min} training pairs, got {len(window)}")

    y = window.y / scale
    X = np.column_stack([np.ones(len(window)), window.members / scale])
    beta0, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta0
    resid_sd = float(np.sqrt(np.sum(resid**2) / max(len(window) - m - 1, 1)))
    if not resid_sd > SIGMA_FLOOR_REL:
        return _gamlss_fallback(window, phys_basis, "degenerate residuals")

    L = cumulative_map(n_basis, +1)
    B = basis.matrix(sd / scale) @ L if not basis.degenerate else np.zeros((len(window), n_basis - 1))
    D = difference_matrix(n_basis) @ L
    theta0 = np.concatenate([beta0, [np.log(resid_sd)], np.full(n_basis - 1, np.exp(-10.0)), [np.log(10.0)]])
    bounds = [(None, None)] * (m + 2) + [(0.0, None)] * (n_basis - 1) + [_LOG_NU_BOUNDS]
    pos = y > 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        res = minimize(
            _censored_t_objective, theta0, args=(X, B, D, y, pos, penalty, m + 1), jac=True,
            method="L-BFGS-B", bounds=bounds,
            options={"maxiter": max_iter, "ftol": tol, "gtol": 1e-9, "maxcor": 20},
        )
    if not np.isfinite(res.fun) or res.nit >= max_iter:
        return _gamlss_fallback(window, phys_basis, f"optimizer did not converge: {res.message}")

    theta = res.x
    beta = theta[: m + 1].copy()
    beta[0] *= scale
    coef = L @ theta[m + 2:-1]
    nu = float(np.exp(theta[-1]))
    loglik = -res.fun * len(window) - len(window) * np.log(scale)
    return GamlssCombiner(
        beta, float(theta[m + 1] + np.log(scale)), phys_basis, coef, nu,
        converged=True, n_iter=int(res.nit), loglik=float(loglik), message=str(res.message),
    )


# -- QRA ----------------------------------------------------------------------


def pinball_loss(u, tau: float) -> float:
    u = np.asarray(u, dtype=float)
    return float(np.sum(u * (tau - (u < 0))))


def _independent_columns(X: np.ndarray) -> np.ndarray:
    """Greedy maximal independent column subset, always keeping column 0 (intercept)."""
    scaled = X / np.maximum(np.abs(X).max(axis=0), 1e-300)
    keep = [0]
    for j in range(1, X.shape[1]):
        cand = scaled[:, keep + [j]]
        s = np.linalg.svd(cand, compute_uv=False)
        if s[-1] > 1e-9 * s[0]:
            keep.append(j)
    return np.asarray(keep)


def quantile_regression(X: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    """Exact linear quantile regression through the dual LP (HiGHS dual simplex).

    The dual ``max y'a  s.t.  X'a = (1 - tau) X'1, 0 <= a <= 1`` is much
    smaller than the primal; the coefficients are its equality multipliers.
    They are then re-solved exactly from the interpolated observations of
    the optimal vertex, which removes solver round-off.
    """
    res = linprog(-y, A_eq=X.T, b_eq=(1 - tau) * X.sum(axis=0), bounds=(0, 1), method="highs-ds")
    if res.status != 0:
        raise NumericError(f"quantile regression LP failed at tau={tau}: {res.message}")
    beta = -np.asarray(res.eqlin.marginals)
    loss = pinball_loss(y - X @ beta, tau)
    p = X.shape[1]
    idx = np.argsort(np.abs(y - X @ beta), kind="stable")[:p]
    try:
        polished = np.linalg.solve(X[idx], y[idx])
    except np.linalg.LinAlgError:
        return beta
    if pinball_loss(y - X @ polished, tau) <= loss + 1e-12 * (1.0 + abs(loss)):
        return polished
    return beta


@dataclass(frozen=True)
class QraCombiner:
    """Coefficients ``(99, M + 1)``: intercept then one weight per member."""

    coefficients: np.ndarray
    levels: np.ndarray = field(default_factory=lambda: LEVELS.copy())

    def raw_quantiles(self, ens) -> np.ndarray:
        m = _members_of(ens)
        return self.coefficients[:, 0] + m @ self.coefficients[:, 1:].T

    def predict(self, ens) -> QuantileCdf:
        return QuantileCdf(self.raw_quantiles(ens))

    def to_dict(self) -> dict:
        return {"levels": self.levels.tolist(), "coefficients": self.coefficients.tolist()}


def fit_qra(window: CombinerWindow, levels=LEVELS) -> QraCombiner:
    """One exact quantile regression of y on the members per level.

    Members collinear with the intercept or each other get zero weight.
    """
    m = window.members.shape[1]
    X = np.column_stack([np.ones(len(window)), window.members])
    keep = _independent_columns(X)
    coef = np.zeros((len(levels), m + 1))
    for k, tau in enumerate(levels):
        coef[k, keep] = quantile_regression(X[:, keep], window.y, float(tau))
    return QraCombiner(coef, np.asarray(levels, float))


def predict_qra(model: QraCombiner, ens) -> QuantileCdf:
    return model.predict(ens)


# -- GBQRT --------------------------------------------------------------------


@dataclass(frozen=True)
class GbqrtCombiner:
    models: tuple[BoostedTreesModel, ...]

    def predict(self, X) -> QuantileCdf:
        raw = np.column_stack([predict_gbr(mdl, X) for mdl in self.models])
        return QuantileCdf(raw)


def fit_gbqrt(X, max_depth: int, y=None, levels=LEVELS, **gbr_kwargs) -> GbqrtCombiner:
    """One pinball-loss boosted model per level on the GBR feature set."""
    models = tuple(fit_gbr(X, max_depth, Loss.pinball(float(tau)), y=y, **gbr_kwargs) for tau in levels)
    return GbqrtCombiner(models)


def predict_gbqrt(model: GbqrtCombiner, X) -> QuantileCdf:
    return model.predict(X)
