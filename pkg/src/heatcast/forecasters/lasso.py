"""Lasso linear regression fitted by cyclic coordinate descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ._common import as_design, check_columns

TOL = 1e-7
MAX_SWEEPS = 10_000
_ZERO_SCALE = 1e-12


@njit(cache=True)
def _coordinate_descent(gram, xty, lam, beta, tol, max_sweeps):
    # minimises b'Gb - 2 b'c + lam*|b|_1 (the 1/N objective on standardised data)
    p = beta.size
    half = 0.5 * lam
    for sweep in range(max_sweeps):
        max_delta = 0.0
        for j in range(p):
            if gram[j, j] == 0.0:
                continue
            rho = xty[j]
            for k in range(p):
                if k != j:
                    rho -= gram[j, k] * beta[k]
            if rho > half:
                new = (rho - half) / gram[j, j]
            elif rho < -half:
                new = (rho + half) / gram[j, j]
            else:
                new = 0.0
            delta = abs(new - beta[j])
            if delta > max_delta:
                max_delta = delta
            beta[j] = new
        if max_delta < tol:
            return sweep + 1
    return max_sweeps


@dataclass(frozen=True)
class LassoModel:
    intercept: float
    coefficients: np.ndarray
    lam: float
    column_names: tuple[str, ...]
    means: np.ndarray
    scales: np.ndarray
    n_sweeps: int = 0

    def to_dict(self) -> dict:
        return {
            "kind": "lasso",
            "intercept": self.intercept,
            "coefficients": self.coefficients.tolist(),
            "lambda": self.lam,
            "column_names": list(self.column_names),
            "means": self.means.tolist(),
            "scales": self.scales.tolist(),
            "n_sweeps": self.n_sweeps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LassoModel":
        return cls(
            float(d["intercept"]), np.asarray(d["coefficients"], float), float(d["lambda"]),
            tuple(d["column_names"]), np.asarray(d["means"], float), np.asarray(d["scales"], float),
            int(d.get("n_sweeps", 0)),
        )


def fit_lasso(X, lam: float, y=None, column_names=None) -> LassoModel:
    """Minimise ``(1/N)||y - b0 - X b||^2 + lam * ||b_std||_1``.

    Columns are standardised to zero mean and unit (population) standard
    deviation before descent; the penalty therefore acts on standardised
    coefficients, which are mapped back to the original scale. Constant
    columns get a zero coefficient.
    """
    values, target, names = as_design(X, y, column_names)
    if values.shape[0] < 2:
        raise ValueError("lasso needs at least 2 rows")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if not (np.isfinite(values).all() and np.isfinite(target).all()):
        raise ValueError("non-finite input to fit_lasso")

    n = values.shape[0]
    means = values.mean(axis=0)
    scales = values.std(axis=0)
    active = scales > _ZERO_SCALE * np.maximum(1.0, np.abs(means))
    safe = np.where(active, scales, 1.0)
    xs = (values - means) / safe
    xs[:, ~active] = 0.0
    y_mean = target.mean()
    gram = xs.T @ xs / n
    xty = xs.T @ (target - y_mean) / n

    beta = np.zeros(values.shape[1])
    sweeps = _coordinate_descent(gram, xty, float(lam), beta, TOL, MAX_SWEEPS)
    coef = np.where(active, beta / safe, 0.0)
    intercept = float(y_mean - coef @ means)
    return LassoModel(intercept, coef, float(lam), names, means, scales, int(sweeps))


def predict_lasso(model: LassoModel, X) -> np.ndarray:
    values = check_columns(X, model.column_names)
    return model.intercept + values @ model.coefficients
