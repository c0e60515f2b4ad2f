"""Histogram-based gradient boosted regression trees.

Squared-loss boosting over shallow trees. Features are quantile-binned once
per fit (at most 255 bins per feature) and splits are chosen by scanning bin
prefix sums, so training is deterministic for a given training set: features
are scanned in order, bins in ascending order, and the first best split
wins ties.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

MAX_BINS = 255
MIN_GAIN = 1e-12


@dataclass
class _Node:
    feature: int = -1
    bin_threshold: int = -1
    left: int = -1
    right: int = -1
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class _Tree:
    nodes: list[_Node] = field(default_factory=list)

    def predict_binned(self, binned: np.ndarray) -> np.ndarray:
        out = np.empty(binned.shape[0])
        stack = [(0, np.arange(binned.shape[0]))]
        while stack:
            node_id, idx = stack.pop()
            node = self.nodes[node_id]
            if node.is_leaf:
                out[idx] = node.value
            elif idx.size:
                mask = binned[idx, node.feature] <= node.bin_threshold
                stack.append((node.left, idx[mask]))
                stack.append((node.right, idx[~mask]))
        return out

    def to_document(self) -> list[dict[str, Any]]:
        return [
            {"f": n.feature, "b": n.bin_threshold, "l": n.left, "r": n.right, "v": n.value}
            for n in self.nodes
        ]

    @classmethod
    def from_document(cls, doc: list[dict[str, Any]]) -> "_Tree":
        return cls([_Node(d["f"], d["b"], d["l"], d["r"], d["v"]) for d in doc])


def _bin_edges(column: np.ndarray, max_bins: int) -> np.ndarray:
    """Split points for one feature; bin k holds values in (edge[k-1], edge[k]]."""
    uniq = np.unique(column)
    if uniq.size <= 1:
        return np.empty(0)
    if uniq.size <= max_bins:
        return (uniq[:-1] + uniq[1:]) / 2.0
    qs = np.linspace(0.0, 1.0, max_bins + 1)[1:-1]
    return np.unique(np.quantile(column, qs))


def _apply_bins(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    binned = np.empty(X.shape, dtype=np.int32)
    for j, e in enumerate(edges):
        binned[:, j] = np.searchsorted(e, X[:, j], side="left") if e.size else 0
    return binned


class GradientBoostedTrees:
    """Boosted shallow regression trees with squared loss.

    fit(X, y) then predict(X). Deterministic: no randomness anywhere in
    training, so identical inputs give identical models.
    """

    def __init__(
        self,
        n_trees: int = 100,
        max_depth: int = 4,
        learning_rate: float = 0.1,
        max_bins: int = MAX_BINS,
        min_samples_leaf: int = 2,
    ) -> None:
        if n_trees < 1 or max_depth < 1 or max_bins < 2 or min_samples_leaf < 1:
            raise ValueError("invalid boosting configuration")
        if not 0 < learning_rate <= 1:
            raise ValueError(f"learning rate must be in (0, 1], got {learning_rate}")
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.max_bins = max_bins
        self.min_samples_leaf = min_samples_leaf
        self._edges: list[np.ndarray] | None = None
        self._trees: list[_Tree] = []
        self._base: float = 0.0

    @property
    def is_fitted(self) -> bool:
        return self._edges is not None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GradientBoostedTrees":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(f"bad training shapes {X.shape} / {y.shape}")
        if X.shape[0] == 0:
            raise ValueError("cannot fit on an empty training set")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("training data must be finite")
        self._edges = [_bin_edges(X[:, j], self.max_bins) for j in range(X.shape[1])]
        binned = _apply_bins(X, self._edges)
        n_bins = np.array([e.size + 1 for e in self._edges])
        self._base = float(y.mean())
        self._trees = []
        current = np.full(y.shape[0], self._base)
        for _ in range(self.n_trees):
            residual = y - current
            tree = self._grow_tree(binned, residual, n_bins)
            self._trees.append(tree)
            current += self.learning_rate * tree.predict_binned(binned)
        return self

    def _grow_tree(self, binned: np.ndarray, residual: np.ndarray, n_bins: np.ndarray) -> _Tree:
        tree = _Tree()

        def build(indices: np.ndarray, depth: int) -> int:
            node_id = len(tree.nodes)
            tree.nodes.append(_Node(value=float(residual[indices].mean())))
            if depth >= self.max_depth or indices.size < 2 * self.min_samples_leaf:
                return node_id
            split = self._best_split(binned, residual, indices, n_bins)
            if split is None:
                return node_id
            feature, bin_threshold = split
            mask = binned[indices, feature] <= bin_threshold
            left_id = build(indices[mask], depth + 1)
            right_id = build(indices[~mask], depth + 1)
            node = tree.nodes[node_id]
            node.feature = feature
            node.bin_threshold = bin_threshold
            node.left = left_id
            node.right = right_id
            return node_id

        build(np.arange(binned.shape[0]), 0)
        return tree

    def _best_split(
        self,
        binned: np.ndarray,
        residual: np.ndarray,
        indices: np.ndarray,
        n_bins: np.ndarray,
    ) -> tuple[int, int] | None:
        r = residual[indices]
        total_sum = r.sum()
        total_n = indices.size
        base_score = total_sum * total_sum / total_n
        best_gain = MIN_GAIN
        best: tuple[int, int] | None = None
        for j in range(binned.shape[1]):
            nb = int(n_bins[j])
            if nb < 2:
                continue
            col = binned[indices, j]
            counts = np.bincount(col, minlength=nb)
            sums = np.bincount(col, weights=r, minlength=nb)
            cn = np.cumsum(counts)[:-1]
            cs = np.cumsum(sums)[:-1]
            nl = cn
            nr = total_n - cn
            valid = (nl >= self.min_samples_leaf) & (nr >= self.min_samples_leaf)
            if not valid.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                gains = cs * cs / nl + (total_sum - cs) ** 2 / nr - base_score
            gains = np.where(valid, gains, -np.inf)
            k = int(np.argmax(gains))
            if gains[k] > best_gain:
                best_gain = float(gains[k])
                best = (j, k)
        return best

    def predict(self, X: np.ndarray) -> np.ndarray:
        if not self.is_fitted:
            raise ValueError("model is not fitted")
        X = np.asarray(X, dtype=float)
        squeeze = False
        if X.ndim == 1:
            X = X[None, :]
            squeeze = True
        binned = _apply_bins(X, self._edges)
        out = np.full(X.shape[0], self._base)
        for tree in self._trees:
            out += self.learning_rate * tree.predict_binned(binned)
        return out[0] if squeeze else out

    def to_document(self) -> dict[str, Any]:
        if not self.is_fitted:
            raise ValueError("model is not fitted")
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "max_bins": self.max_bins,
            "min_samples_leaf": self.min_samples_leaf,
            "base": self._base,
            "edges": [e.tolist() for e in self._edges],
            "trees": [t.to_document() for t in self._trees],
        }

    @classmethod
    def from_document(cls, doc: dict[str, Any]) -> "GradientBoostedTrees":
        model = cls(
            n_trees=doc["n_trees"],
            max_depth=doc["max_depth"],
            learning_rate=doc["learning_rate"],
            max_bins=doc["max_bins"],
            min_samples_leaf=doc["min_samples_leaf"],
        )
        model._base = float(doc["base"])
        model._edges = [np.asarray(e, dtype=float) for e in doc["edges"]]
        model._trees = [_Tree.from_document(t) for t in doc["trees"]]
        return model


def mean_squared_error(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    return float(np.mean((y_true - y_pred) ** 2))
