"""Gradient-boosted regression trees with least-squares or pinball loss.

Trees are grown level by level with an exact greedy search: every feature is
swept once per level in presorted order and all candidate thresholds (the
midpoints between consecutive distinct values inside a node) are scored by
variance reduction of the negative gradient. Depth counts split levels, so a
depth-1 tree is a single stump.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._common import as_design, check_columns

N_ESTIMATORS = 300
LEARNING_RATE = 0.1
MIN_SAMPLES_LEAF = 2
_LEAF = -1


@njit(cache=True)
def _quantile_sorted(a, tau):
    # linear interpolation between order statistics (numpy's default rule)
    n = a.size
    h = (n - 1) * tau
    lo = int(np.floor(h))
    hi = min(lo + 1, n - 1)
    return a[lo] + (h - lo) * (a[hi] - a[lo])


@njit(cache=True)
def _grow_tree(X, order, sorted_x, grad, max_depth, min_leaf, feat, thr, left, right, node_of):
    """Grow one tree in place; returns the number of nodes used.

    ``order[f]`` is the argsort of feature ``f`` and ``sorted_x[f]`` the
    correspondingly sorted values (feature-major for contiguous sweeps).
    """
    n, p = X.shape
    max_nodes = feat.size
    for i in range(n):
        node_of[i] = 0
    n_nodes = 1
    level_start, level_end = 0, 1
    cnt = np.zeros(max_nodes)
    tot = np.zeros(max_nodes)
    for i in range(n):
        cnt[0] += 1.0
        tot[0] += grad[i]
    for k in range(max_nodes):
        feat[k] = _LEAF

    for depth in range(max_depth):
        best_gain = np.zeros(max_nodes)
        best_feat = np.full(max_nodes, -1)
        best_thr = np.zeros(max_nodes)
        run_cnt = np.zeros(max_nodes)
        run_sum = np.zeros(max_nodes)
        last_val = np.zeros(max_nodes)
        for f in range(p):
            for k in range(level_start, level_end):
                run_cnt[k] = 0.0
                run_sum[k] = 0.0
            for r in range(n):
                i = order[f, r]
                k = node_of[i]
                if k < level_start:
                    continue
                x = sorted_x[f, r]
                c = run_cnt[k]
                if c >= min_leaf and x != last_val[k] and cnt[k] - c >= min_leaf:
                    s = run_sum[k]
                    sr = tot[k] - s
                    gain = s * s / c + sr * sr / (cnt[k] - c) - tot[k] * tot[k] / cnt[k]
                    if gain > best_gain[k]:
                        best_gain[k] = gain
                        best_feat[k] = f
                        t = 0.5 * (last_val[k] + x)
                        if t >= x:
                            t = last_val[k]
                        best_thr[k] = t
                run_cnt[k] = c + 1.0
                run_sum[k] += grad[i]
                last_val[k] = x

        next_start = n_nodes
        any_split = False
        for k in range(level_start, level_end):
            # relative guard keeps round-off from splitting a constant gradient
            if best_feat[k] >= 0 and best_gain[k] > 1e-12 * (1.0 + tot[k] * tot[k] / cnt[k]):
                feat[k] = best_feat[k]
                thr[k] = best_thr[k]
                left[k] = n_nodes
                right[k] = n_nodes + 1
                n_nodes += 2
                any_split = True
        if not any_split:
            break
        for k in range(next_start, n_nodes):
            cnt[k] = 0.0
            tot[k] = 0.0
        for i in range(n):
            k = node_of[i]
            if k >= level_start and feat[k] != _LEAF:
                child = left[k] if X[i, feat[k]] <= thr[k] else right[k]
                node_of[i] = child
                cnt[child] += 1.0
                tot[child] += grad[i]
        level_start, level_end = next_start, n_nodes
    return n_nodes


@njit(cache=True)
def _boost(X, y, order, sorted_x, n_estimators, rate, max_depth, min_leaf, tau, pinball):
    n = X.shape[0]
    max_nodes = 2 ** (max_depth + 1) - 1
    feat = np.full((n_estimators, max_nodes), _LEAF)
    thr = np.zeros((n_estimators, max_nodes))
    left = np.zeros((n_estimators, max_nodes), dtype=np.int64)
    right = np.zeros((n_estimators, max_nodes), dtype=np.int64)
    value = np.zeros((n_estimators, max_nodes))
    losses = np.zeros(n_estimators + 1)
    node_of = np.zeros(n, dtype=np.int64)
    grad = np.empty(n)
    resid = np.empty(n)
    bucket = np.empty(n)

    if pinball:
        base = _quantile_sorted(np.sort(y), tau)
    else:
        base = y.mean()
    pred = np.full(n, base)

    for m in range(n_estimators + 1):
        loss = 0.0
        for i in range(n):
            u = y[i] - pred[i]
            resid[i] = u
            if pinball:
                loss += u * (tau - (1.0 if u < 0 else 0.0))
                grad[i] = tau - (1.0 if u < 0 else 0.0)
            else:
                loss += u * u
                grad[i] = u
        losses[m] = loss / n
        if m == n_estimators:
            break
        n_nodes = _grow_tree(X, order, sorted_x, grad, max_depth, min_leaf, feat[m], thr[m], left[m], right[m], node_of)
        if pinball:
            # tau-quantile of residuals per leaf; bucket rows by leaf first
            offs = np.zeros(n_nodes + 1, dtype=np.int64)
            for i in range(n):
                offs[node_of[i] + 1] += 1
            for k in range(n_nodes):
                offs[k + 1] += offs[k]
            fill = offs[:-1].copy()
            for i in range(n):
                k = node_of[i]
                bucket[fill[k]] = resid[i]
                fill[k] += 1
            for k in range(n_nodes):
                if offs[k + 1] > offs[k]:
                    value[m, k] = _quantile_sorted(np.sort(bucket[offs[k]:offs[k + 1]]), tau)
        else:
            sums = np.zeros(n_nodes)
            counts = np.zeros(n_nodes)
            for i in range(n):
                sums[node_of[i]] += resid[i]
                counts[node_of[i]] += 1.0
            for k in range(n_nodes):
                if counts[k] > 0:
                    value[m, k] = sums[k] / counts[k]
        for i in range(n):
            pred[i] += rate * value[m, node_of[i]]
    return base, feat, thr, left, right, value, losses, pred


@njit(cache=True)
def _predict(X, base, rate, feat, thr, left, right, value):
    n = X.shape[0]
    out = np.full(n, base)
    for m in range(feat.shape[0]):
        for i in range(n):
            k = 0
            while feat[m, k] != _LEAF:
                k = left[m, k] if X[i, feat[m, k]] <= thr[m, k] else right[m, k]
            out[i] += rate * value[m, k]
    return out


@dataclass(frozen=True)
class Loss:
    """``Loss()`` is least squares; ``Loss.pinball(tau)`` the quantile loss."""

    kind: str = "ls"
    tau: float = 0.5

    @classmethod
    def pinball(cls, tau: float) -> "Loss":
        if not 0 < tau < 1:
            raise ValueError("pinball tau must lie in (0, 1)")
        return cls("pinball", float(tau))


@dataclass(frozen=True)
class BoostedTreesModel:
    base_prediction: float
    learning_rate: float
    max_depth: int
    loss: Loss
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    column_names: tuple[str, ...]
    train_loss: np.ndarray = field(default_factory=lambda: np.zeros(0))
    train_fit: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_estimators(self) -> int:
        return self.feature.shape[0]

    def tree_depths(self) -> list[int]:
        depths = []
        for m in range(self.n_estimators):
            depth = {0: 0}
            for k in range(self.feature.shape[1]):
                if k in depth and self.feature[m, k] != _LEAF:
                    depth[int(self.left[m, k])] = depth[k] + 1
                    depth[int(self.right[m, k])] = depth[k] + 1
            depths.append(max(depth.values()))
        return depths

    def to_dict(self) -> dict:
        return {
            "kind": "gbr",
            "base_prediction": self.base_prediction,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "loss": {"kind": self.loss.kind, "tau": self.loss.tau},
            "column_names": list(self.column_names),
            "trees": {
                "feature": self.feature.tolist(),
                "threshold": self.threshold.tolist(),
                "left": self.left.tolist(),
                "right": self.right.tolist(),
                "value": self.value.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedTreesModel":
        t = d["trees"]
        return cls(
            float(d["base_prediction"]), float(d["learning_rate"]), int(d["max_depth"]),
            Loss(d["loss"]["kind"], float(d["loss"]["tau"])),
            np.asarray(t["feature"], dtype=np.int64).reshape(len(t["feature"]), -1),
            np.asarray(t["threshold"], float).reshape(len(t["feature"]), -1),
            np.asarray(t["left"], dtype=np.int64).reshape(len(t["feature"]), -1),
            np.asarray(t["right"], dtype=np.int64).reshape(len(t["feature"]), -1),
            np.asarray(t["value"], float).reshape(len(t["feature"]), -1),
            tuple(d["column_names"]),
        )


def fit_gbr(
    X,
    max_depth: int,
    loss: Loss = Loss(),
    y=None,
    column_names=None,
    n_estimators: int = N_ESTIMATORS,
    learning_rate: float = LEARNING_RATE,
) -> BoostedTreesModel:
    values, target, names = as_design(X, y, column_names)
    if values.shape[0] < 4:
        raise ValueError("gradient boosting needs at least 4 rows")
    if not 1 <= max_depth <= 6:
        raise ValueError("max_depth must lie in [1, 6]")
    values = np.ascontiguousarray(values, dtype=float)
    target = np.ascontiguousarray(target, dtype=float)
    order = np.ascontiguousarray(np.argsort(values, axis=0, kind="stable").T)
    sorted_x = np.ascontiguousarray(np.take_along_axis(values, order.T, axis=0).T)
    base, feat, thr, left, right, value, losses, fit = _boost(
        values, target, order, sorted_x, int(n_estimators), float(learning_rate), int(max_depth),
        MIN_SAMPLES_LEAF, float(loss.tau), loss.kind == "pinball",
    )
    return BoostedTreesModel(
        float(base), float(learning_rate), int(max_depth), loss,
        feat, thr, left, right, value, names, losses, fit,
    )


def predict_gbr(model: BoostedTreesModel, X) -> np.ndarray:
    values = np.ascontiguousarray(check_columns(X, model.column_names), dtype=float)
    return _predict(
        values, model.base_prediction, model.learning_rate,
        model.feature, model.threshold, model.left, model.right, model.value,
    )
