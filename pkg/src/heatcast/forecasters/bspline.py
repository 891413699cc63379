"""Equidistant cubic B-spline bases with monotone coefficient parameterisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

DEGREE = 3


@dataclass(frozen=True)
class SplineBasis:
    """``n_basis`` cubic B-splines with equidistant knots spanning ``[lo, hi]``.

    Knots extend three intervals beyond each end so the basis is a partition of
    unity on ``[lo, hi]``. Inputs are clamped to ``[lo, hi]`` before evaluation.
    """

    lo: float
    hi: float
    n_basis: int

    @classmethod
    def over(cls, x: np.ndarray, n_basis: int) -> "SplineBasis":
        x = np.asarray(x, float)
        return cls(float(x.min()), float(x.max()), int(n_basis))

    @property
    def degenerate(self) -> bool:
        return not self.hi > self.lo

    @property
    def knots(self) -> np.ndarray:
        n_int = self.n_basis - DEGREE
        h = (self.hi - self.lo) / n_int
        t = self.lo + h * np.arange(-DEGREE, n_int + DEGREE + 1)
        # pin the boundary knots so clamped inputs never fall outside by round-off
        t[DEGREE], t[n_int + DEGREE] = self.lo, self.hi
        return t

    def clamp(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, float), self.lo, self.hi)

    def matrix(self, x) -> np.ndarray:
        if self.degenerate:
            return np.zeros((np.size(x), self.n_basis))
        xc = self.clamp(np.atleast_1d(x))
        return BSpline.design_matrix(xc, self.knots, DEGREE).toarray()


def difference_matrix(n: int, order: int = 2) -> np.ndarray:
    return np.diff(np.eye(n), n=order, axis=0)


def cumulative_map(n_basis: int, direction: int) -> np.ndarray:
    """Matrix ``L`` with ``c = L @ d`` where ``c[0] = 0`` and ``c[k] = direction * sum(d[:k])``.

    With ``d >= 0`` the coefficients are nondecreasing (direction +1) or
    nonincreasing (-1); direction 0 means unconstrained increments (same map,
    no bound). Fixing ``c[0] = 0`` removes the constant the basis shares with
    the model intercept.
    """
    sign = -1.0 if direction < 0 else 1.0
    L = np.zeros((n_basis, n_basis - 1))
    for k in range(1, n_basis):
        L[k, :k] = sign
    return L
