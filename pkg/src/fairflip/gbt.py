"""Gradient-boosted regression trees with logistic loss.

A plain (non-histogram) implementation: exact greedy splits on sorted feature
values, squared-error gain on the current gradient residuals, Newton leaf
values. Defaults follow the common convention for boosted classification
trees: 100 rounds, depth 3, learning rate 0.1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import TabularDataset

__all__ = ["RegressionTree", "GbtModel", "train_gbt"]

_LEAF = -1


@dataclass(frozen=True)
class RegressionTree:
    """Array-encoded binary tree. ``feature[i] == -1`` marks a leaf; interior
    nodes send ``x[feature] <= threshold`` to ``left`` and the rest to
    ``right``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != _LEAF
        while np.any(active):
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active[idx] = self.feature[node[idx]] != _LEAF
        return self.value[node]

    def depth(self) -> int:
        def walk(i: int) -> int:
            if self.feature[i] == _LEAF:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RegressionTree":
        return cls(
            np.array(raw["feature"], dtype=np.int64),
            np.array(raw["threshold"], dtype=float),
            np.array(raw["left"], dtype=np.int64),
            np.array(raw["right"], dtype=np.int64),
            np.array(raw["value"], dtype=float),
        )


def _best_split(X: np.ndarray, residual: np.ndarray) -> tuple[int, float, np.ndarray] | None:
    """Exact greedy split maximising the squared-error gain on the residuals.

    Zero-gain splits are allowed (a constant-residual node is rejected before
    we get here); ties resolve to the lowest feature index, then the lowest
    threshold, so trees are deterministic.
    """
    n, d = X.shape
    total = residual.sum()
    base = total * total / n
    best = None  # (gain, feature, threshold)
    for f in range(d):
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        rs = residual[order]
        cuts = np.flatnonzero(xs[:-1] < xs[1:])
        if cuts.size == 0:
            continue
        csum = np.cumsum(rs)
        n_left = cuts + 1.0
        s_left = csum[cuts]
        gain = s_left * s_left / n_left + (total - s_left) ** 2 / (n - n_left) - base
        j = int(np.argmax(gain))
        g = float(gain[j])
        thr = 0.5 * (xs[cuts[j]] + xs[cuts[j] + 1])
        if g >= -1e-12 and (best is None or g > best[0] + 1e-15):
            best = (g, f, thr)
    if best is None:
        return None
    _, f, thr = best
    return f, thr, X[:, f] <= thr


def _build_tree(
    X: np.ndarray, residual: np.ndarray, hessian: np.ndarray, max_depth: int
) -> RegressionTree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def leaf_value(idx: np.ndarray) -> float:
        h = hessian[idx].sum()
        if h < 1e-12:
            return 0.0
        return float(residual[idx].sum() / h)

    def grow(idx: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(_LEAF)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        res = residual[idx]
        if depth >= max_depth or idx.size < 2 or np.ptp(res) < 1e-15:
            value[node] = leaf_value(idx)
            return node
        found = _best_split(X[idx], res)
        if found is None:
            value[node] = leaf_value(idx)
            return node
        f, thr, go_left = found
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(idx[go_left], depth + 1)
        right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return RegressionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
    )


@dataclass(frozen=True)
class GbtModel:
    """Boosted ensemble: base log-odds plus learning-rate-scaled tree sums."""

    trees: tuple[RegressionTree, ...]
    learning_rate: float
    base_score: float

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def proba(self, X: np.ndarray) -> np.ndarray:
        z = self.raw_scores(X)
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out


def train_gbt(
    data: TabularDataset,
    rounds: int = 100,
    max_depth: int = 3,
    learning_rate: float = 0.1,
    seed: int = 0,
) -> GbtModel:
    """Boost depth-limited regression trees on the logistic-loss gradients.

    Each round fits a tree to the residual y - p by least squares and sets
    leaf values with a Newton step (sum residual / sum p(1-p)). Training is
    deterministic; the seed is accepted for interface symmetry.
    """
    if data.n < 2:
        raise ValueError("need at least 2 rows")
    if len(np.unique(data.labels)) < 2:
        raise ValueError("training data must contain both classes")
    if rounds < 0 or max_depth < 1:
        raise ValueError("rounds must be >= 0 and max_depth >= 1")
    X = data.features
    y = data.labels.astype(float)
    rate = float(np.mean(y))
    base = float(np.log(rate / (1.0 - rate)))
    F = np.full(data.n, base)
    trees: list[RegressionTree] = []
    for _ in range(rounds):
        p = 1.0 / (1.0 + np.exp(-F))
        residual = y - p
        hessian = p * (1.0 - p)
        tree = _build_tree(X, residual, hessian, max_depth)
        F = F + learning_rate * tree.predict(X)
        trees.append(tree)
    return GbtModel(tuple(trees), learning_rate, base)
