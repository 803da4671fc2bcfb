"""Split grids and least-squares regression trees on binned features.

The grid discretizes each feature into at most ``max_bins`` ordered bins;
trees are grown greedily on the bin codes with histogram accumulation, and
store raw threshold values so prediction never needs the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_MAX_BINS = 256

# A split gain must exceed this fraction of the node's raw second moment to
# count as real; guards against float cancellation creating phantom splits.
_GAIN_RTOL = 1e-12


@dataclass(frozen=True)
class SplitGrid:
    """Per-feature ordered split thresholds."""

    thresholds: tuple  # tuple of float64 arrays, strictly increasing

    @property
    def n_features(self) -> int:
        return len(self.thresholds)

    @property
    def n_bins(self) -> tuple:
        return tuple(len(t) + 1 for t in self.thresholds)


@dataclass(frozen=True)
class BinnedMatrix:
    """Row-major bin codes of a feature matrix under a grid."""

    codes: np.ndarray  # (n, p) int32
    grid: SplitGrid

    @property
    def n_rows(self) -> int:
        return self.codes.shape[0]


def build_grid(X: np.ndarray, max_bins: int = DEFAULT_MAX_BINS) -> SplitGrid:
    """Split thresholds per feature.

    Features with at most ``max_bins`` distinct values get the midpoints
    between consecutive distinct values; denser features fall back to the
    deduplicated ``i/max_bins`` quantiles of their distinct values.  A
    constant feature yields no thresholds.
    """
    if max_bins < 2:
        raise ValueError("max_bins must be >= 2")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("feature matrix must be 2-dimensional")
    thresholds = []
    for j in range(X.shape[1]):
        distinct = np.unique(X[:, j])
        if distinct.size <= 1:
            thresholds.append(np.empty(0, dtype=np.float64))
        elif distinct.size <= max_bins:
            thresholds.append((distinct[:-1] + distinct[1:]) / 2.0)
        else:
            qs = np.quantile(distinct, np.arange(1, max_bins) / max_bins)
            thresholds.append(np.unique(qs))
    return SplitGrid(tuple(thresholds))


def bin_features(X: np.ndarray, grid: SplitGrid) -> BinnedMatrix:
    """Map each value to the index of the first threshold exceeding it."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != grid.n_features:
        raise ValueError(
            f"feature matrix with {X.shape[1] if X.ndim == 2 else '?'} columns "
            f"does not match grid with {grid.n_features} features"
        )
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains missing or non-finite values")
    codes = np.empty(X.shape, dtype=np.int32)
    for j, t in enumerate(grid.thresholds):
        codes[:, j] = np.searchsorted(t, X[:, j], side="right")
    return BinnedMatrix(codes, grid)


@dataclass(frozen=True)
class Tree:
    """Flat array-of-nodes regression tree.

    ``feature[i] == -1`` marks a leaf with prediction ``value[i]``; internal
    nodes route rows with feature value <= ``threshold_value`` (equivalently
    bin code <= ``threshold_bin``) to ``left``.
    """

    feature: np.ndarray         # int32, -1 for leaves
    threshold_bin: np.ndarray   # int32
    threshold_value: np.ndarray  # float64
    left: np.ndarray            # int32
    right: np.ndarray           # int32
    value: np.ndarray           # float64, defined on leaves

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def scaled(self, factor: float) -> "Tree":
        """Same partition with every leaf value multiplied by ``factor``."""
        return Tree(self.feature, self.threshold_bin, self.threshold_value,
                    self.left, self.right, self.value * factor)


class _TreeBuilder:
    def __init__(self):
        self.feature = []
        self.threshold_bin = []
        self.threshold_value = []
        self.left = []
        self.right = []
        self.value = []

    def add(self) -> int:
        self.feature.append(-1)
        self.threshold_bin.append(-1)
        self.threshold_value.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def build(self) -> Tree:
        return Tree(
            np.asarray(self.feature, dtype=np.int32),
            np.asarray(self.threshold_bin, dtype=np.int32),
            np.asarray(self.threshold_value, dtype=np.float64),
            np.asarray(self.left, dtype=np.int32),
            np.asarray(self.right, dtype=np.int32),
            np.asarray(self.value, dtype=np.float64),
        )


def _best_split(codes, y, idx, n_bins):
    """Best (gain, feature, bin) of a node, ties to lower feature then bin."""
    n_node = idx.size
    y_node = y[idx]
    s = float(y_node.sum())
    ss = float(np.dot(y_node, y_node))
    base = s * s / n_node
    best = (_GAIN_RTOL * max(ss, 1e-300), -1, -1)
    for f in range(codes.shape[1]):
        nb = n_bins[f]
        if nb <= 1:
            continue
        col = codes[idx, f]
        cnt = np.bincount(col, minlength=nb)
        sums = np.bincount(col, weights=y_node, minlength=nb)
        n_left = np.cumsum(cnt)[:-1]
        s_left = np.cumsum(sums)[:-1]
        n_right = n_node - n_left
        s_right = s - s_left
        valid = (n_left > 0) & (n_right > 0)
        if not valid.any():
            continue
        with np.errstate(invalid="ignore", divide="ignore"):
            gains = s_left * s_left / n_left + s_right * s_right / n_right - base
        gains[~valid] = -np.inf
        t = int(np.argmax(gains))
        if gains[t] > best[0]:
            best = (float(gains[t]), f, t)
    return best


def _fit_tree(binned: BinnedMatrix, targets: np.ndarray, depth: int):
    """Grow the tree and return it with the fitted value of each training row."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    y = np.asarray(targets, dtype=np.float64)
    codes = binned.codes
    if y.shape[0] != codes.shape[0]:
        raise ValueError("targets length does not match binned rows")
    if y.size == 0:
        raise ValueError("cannot fit a tree on empty input")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")

    n_bins = binned.grid.n_bins
    thresholds = binned.grid.thresholds
    builder = _TreeBuilder()
    fitted = np.empty(y.shape[0], dtype=np.float64)

    root = builder.add()
    stack = [(root, np.arange(y.shape[0]), 0)]
    while stack:
        node, idx, level = stack.pop()
        if level < depth and idx.size >= 2:
            gain, f, t = _best_split(codes, y, idx, n_bins)
            if f >= 0:
                go_left = codes[idx, f] <= t
                builder.feature[node] = f
                builder.threshold_bin[node] = t
                builder.threshold_value[node] = float(thresholds[f][t])
                left = builder.add()
                right = builder.add()
                builder.left[node] = left
                builder.right[node] = right
                stack.append((right, idx[~go_left], level + 1))
                stack.append((left, idx[go_left], level + 1))
                continue
        leaf_value = float(y[idx].mean())
        builder.value[node] = leaf_value
        fitted[idx] = leaf_value
    return builder.build(), fitted


def fit_tree_ls(binned: BinnedMatrix, targets, depth: int) -> Tree:
    """Greedy depth-wise least-squares CART on binned features."""
    tree, _ = _fit_tree(binned, targets, depth)
    return tree


def apply_binned(tree: Tree, codes: np.ndarray) -> np.ndarray:
    """Leaf values for bin-coded rows."""
    node = np.zeros(codes.shape[0], dtype=np.int32)
    while True:
        rows = np.nonzero(tree.feature[node] >= 0)[0]
        if rows.size == 0:
            break
        cur = node[rows]
        go_left = codes[rows, tree.feature[cur]] <= tree.threshold_bin[cur]
        node[rows] = np.where(go_left, tree.left[cur], tree.right[cur])
    return tree.value[node]


def apply_raw(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Leaf values for raw feature rows, using stored threshold values."""
    X = np.asarray(X, dtype=np.float64)
    node = np.zeros(X.shape[0], dtype=np.int32)
    while True:
        rows = np.nonzero(tree.feature[node] >= 0)[0]
        if rows.size == 0:
            break
        cur = node[rows]
        go_left = X[rows, tree.feature[cur]] <= tree.threshold_value[cur]
        node[rows] = np.where(go_left, tree.left[cur], tree.right[cur])
    return tree.value[node]


def tree_predict(tree: Tree, x_binned) -> float:
    """Prediction for a single bin-coded row."""
    row = np.asarray(x_binned, dtype=np.int32).reshape(1, -1)
    return float(apply_binned(tree, row)[0])


def tree_to_json(tree: Tree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold_value.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": tree.value.tolist(),
    }


def tree_from_json(doc: dict) -> Tree:
    feature = np.asarray(doc["feature"], dtype=np.int32)
    return Tree(
        feature,
        np.full(feature.shape, -1, dtype=np.int32),
        np.asarray(doc["threshold"], dtype=np.float64),
        np.asarray(doc["left"], dtype=np.int32),
        np.asarray(doc["right"], dtype=np.int32),
        np.asarray(doc["value"], dtype=np.float64),
    )
