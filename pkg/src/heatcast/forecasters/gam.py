"""Additive model with penalised cubic B-spline terms and shape constraints.

Each spline block is written as ``c = L @ d`` (see :func:`cumulative_map`);
monotone blocks bound their increments ``d >= 0``. The penalised
least-squares objective

    (1/N) ||y - b0 - sum_j B_j c_j - D b_dow||^2 + lam * sum_j ||D2 c_j||^2

is then a bound-constrained linear least-squares problem, solved exactly with
BVLS after a QR reduction of the stacked system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr
from scipy.optimize import lsq_linear

from ..features import DOW_DUMMIES, GAM_SPLINE_COLUMNS, gam_columns
from ._common import as_design, check_columns
from .bspline import SplineBasis, cumulative_map, difference_matrix

# basis size and monotone direction per spline column
BLOCK_SPECS = {
    "load_lag24": (10, +1),
    "load_lag168": (10, +1),
    "load_peak_prev": (10, +1),
    "temp": (10, -1),
    "temp_avg_prev": (10, -1),
    "hour_of_day": (24, 0),
    "week_of_year": (5, 0),
}


@dataclass(frozen=True)
class SplineBlock:
    column: str
    basis: SplineBasis
    coefficients: np.ndarray
    direction: int
    degenerate: bool = False

    def evaluate(self, x) -> np.ndarray:
        if self.degenerate:
            return np.zeros(np.size(x))
        return self.basis.matrix(x) @ self.coefficients

    def to_dict(self) -> dict:
        return {
            "column": self.column,
            "lo": self.basis.lo,
            "hi": self.basis.hi,
            "n_basis": self.basis.n_basis,
            "knots": self.basis.knots.tolist(),
            "coefficients": self.coefficients.tolist(),
            "direction": self.direction,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplineBlock":
        return cls(
            d["column"], SplineBasis(float(d["lo"]), float(d["hi"]), int(d["n_basis"])),
            np.asarray(d["coefficients"], float), int(d["direction"]), bool(d["degenerate"]),
        )


@dataclass(frozen=True)
class GamModel:
    intercept: float
    blocks: tuple[SplineBlock, ...]
    dow_coefficients: np.ndarray
    lam: float
    include_woy: bool
    column_names: tuple[str, ...]
    warnings: tuple[str, ...] = field(default=())

    def block(self, column: str) -> SplineBlock:
        for b in self.blocks:
            if b.column == column:
                return b
        raise KeyError(column)

    def to_dict(self) -> dict:
        return {
            "kind": "gam",
            "intercept": self.intercept,
            "blocks": [b.to_dict() for b in self.blocks],
            "dow_coefficients": self.dow_coefficients.tolist(),
            "lambda": self.lam,
            "include_woy": self.include_woy,
            "column_names": list(self.column_names),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GamModel":
        return cls(
            float(d["intercept"]), tuple(SplineBlock.from_dict(b) for b in d["blocks"]),
            np.asarray(d["dow_coefficients"], float), float(d["lambda"]), bool(d["include_woy"]),
            tuple(d["column_names"]), tuple(d.get("warnings", ())),
        )


def fit_gam(X, lam: float, include_woy: bool, y=None, block_specs: dict | None = None) -> GamModel:
    names = gam_columns(include_woy)
    values, target, given = as_design(X, y, names)
    if tuple(given) != names:
        raise ValueError(f"GAM expects columns {names}, got {given}")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    specs = block_specs or BLOCK_SPECS
    spline_cols = GAM_SPLINE_COLUMNS + (("week_of_year",) if include_woy else ())
    n = values.shape[0]
    n_params = 1 + sum(specs[c][0] - 1 for c in spline_cols) + len(DOW_DUMMIES)
    if n < n_params:
        raise ValueError(f"GAM needs at least {n_params} rows, got {n}")

    design_parts = [np.ones((n, 1))]
    penalty_parts = []
    lower, upper = [-np.inf], [np.inf]
    layouts = []
    warns = []
    for j, col in enumerate(spline_cols):
        n_basis, direction = specs[col]
        basis = SplineBasis.over(values[:, j], n_basis)
        if basis.degenerate:
            warns.append(f"{col}: single unique value, block set to 0")
            layouts.append((col, basis, direction, None))
            continue
        L = cumulative_map(n_basis, direction)
        design_parts.append(basis.matrix(values[:, j]) @ L)
        penalty_parts.append(difference_matrix(n_basis) @ L)
        lb = 0.0 if direction != 0 else -np.inf
        lower += [lb] * (n_basis - 1)
        upper += [np.inf] * (n_basis - 1)
        layouts.append((col, basis, direction, L))
    dummies = values[:, len(spline_cols):]
    design_parts.append(dummies)
    lower += [-np.inf] * dummies.shape[1]
    upper += [np.inf] * dummies.shape[1]

    Z = np.hstack(design_parts)
    p = Z.shape[1]
    rows = [Z / np.sqrt(n)]
    rhs = [target / np.sqrt(n)]
    offset = 1
    for P in penalty_parts:
        block = np.zeros((P.shape[0], p))
        block[:, offset:offset + P.shape[1]] = np.sqrt(lam) * P
        rows.append(block)
        rhs.append(np.zeros(P.shape[0]))
        offset += P.shape[1]
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    Q, R = qr(A, mode="economic")
    sol = lsq_linear(R, Q.T @ b, bounds=(np.array(lower), np.array(upper)), method="bvls", tol=1e-12)
    theta = sol.x

    intercept = float(theta[0])
    offset = 1
    blocks = []
    for col, basis, direction, L in layouts:
        if L is None:
            blocks.append(SplineBlock(col, basis, np.zeros(basis.n_basis), direction, True))
            continue
        d = theta[offset:offset + L.shape[1]]
        offset += L.shape[1]
        coef = L @ d
        # centre each block on the training data; the intercept absorbs the shift
        shift = float(np.mean(basis.matrix(values[:, spline_cols.index(col)]) @ coef))
        blocks.append(SplineBlock(col, basis, coef - shift, direction))
        intercept += shift
    dow = theta[offset:].copy()
    return GamModel(intercept, tuple(blocks), dow, float(lam), include_woy, names, tuple(warns))


def predict_gam(model: GamModel, X) -> np.ndarray:
    values = check_columns(X, model.column_names)
    out = np.full(values.shape[0], model.intercept)
    for j, block in enumerate(model.blocks):
        out += block.evaluate(values[:, j])
    out += values[:, len(model.blocks):] @ model.dow_coefficients
    return out
