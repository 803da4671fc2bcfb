"""Split-grid and regression-tree behaviour."""

import numpy as np
import pytest

from gndboost.trees import (
    BinnedMatrix,
    apply_binned,
    apply_raw,
    bin_features,
    build_grid,
    fit_tree_ls,
    tree_predict,
)


def _sse(pred, y):
    return float(np.sum((pred - y) ** 2))


class TestBuildGrid:
    def test_midpoint_grid_for_few_distinct_values(self):
        X = np.array([[1.0], [2.0], [3.0], [2.0]])
        grid = build_grid(X, max_bins=256)
        np.testing.assert_allclose(grid.thresholds[0], [1.5, 2.5])

    def test_constant_feature_has_no_thresholds(self):
        grid = build_grid(np.full((5, 1), 5.0), max_bins=256)
        assert grid.thresholds[0].size == 0
        assert grid.n_bins == (1,)

    def test_quantile_fallback_matches_exact_quantiles(self):
        rng = np.random.default_rng(0)
        X = rng.random((10_000, 1))
        grid = build_grid(X, max_bins=64)
        distinct = np.unique(X[:, 0])
        expected = np.unique(np.quantile(distinct, np.arange(1, 64) / 64))
        assert grid.thresholds[0].size == 63
        np.testing.assert_allclose(grid.thresholds[0], expected)

    def test_min_bins_validation(self):
        with pytest.raises(ValueError):
            build_grid(np.zeros((3, 1)), max_bins=1)


class TestBinFeatures:
    def test_first_threshold_exceeding_rule(self):
        grid = build_grid(np.array([[1.0], [2.0], [3.0]]), 256)  # thresholds 1.5, 2.5
        binned = bin_features(np.array([[2.0]]), grid)
        assert binned.codes[0, 0] == 1

    def test_below_all_thresholds(self):
        grid = build_grid(np.array([[1.0], [2.0], [3.0]]), 256)
        assert bin_features(np.array([[-1e9]]), grid).codes[0, 0] == 0

    def test_beyond_last_threshold_maps_to_last_bin(self):
        grid = build_grid(np.array([[1.0], [2.0], [3.0]]), 256)
        assert bin_features(np.array([[1e9]]), grid).codes[0, 0] == 2

    def test_missing_values_rejected(self):
        grid = build_grid(np.array([[1.0], [2.0]]), 256)
        with pytest.raises(ValueError):
            bin_features(np.array([[np.nan]]), grid)

    def test_schema_mismatch(self):
        grid = build_grid(np.zeros((3, 2)), 256)
        with pytest.raises(ValueError):
            bin_features(np.zeros((3, 1)), grid)

    def test_ordering_never_misassigned(self):
        # brute force: bin index must equal the count of thresholds <= value
        rng = np.random.default_rng(3)
        base = rng.normal(size=(500, 2))
        grid = build_grid(base, max_bins=16)
        fresh = rng.normal(size=(200, 2))
        binned = bin_features(fresh, grid)
        for j in range(2):
            t = grid.thresholds[j]
            for i in range(fresh.shape[0]):
                assert binned.codes[i, j] == int(np.sum(t < fresh[i, j]) + np.sum(t == fresh[i, j]))


class TestFitTree:
    def test_constant_targets_single_leaf(self):
        X = np.arange(12.0).reshape(-1, 1)
        grid = build_grid(X, 256)
        binned = bin_features(X, grid)
        tree = fit_tree_ls(binned, np.full(12, 3.25), depth=5)
        assert tree.n_leaves == 1
        assert tree_predict(tree, binned.codes[0]) == 3.25

    def test_binary_feature_perfect_split(self):
        X = np.array([[0.0], [0.0], [1.0], [1.0]])
        binned = bin_features(X, build_grid(X, 256))
        tree = fit_tree_ls(binned, np.array([0.0, 0.0, 1.0, 1.0]), depth=1)
        assert tree.n_leaves == 2
        np.testing.assert_allclose(apply_binned(tree, binned.codes), [0, 0, 1, 1])

    def test_training_rows_get_leaf_means(self):
        rng = np.random.default_rng(1)
        X = rng.random((100, 2))
        y = rng.normal(size=100)
        binned = bin_features(X, build_grid(X, 16))
        tree = fit_tree_ls(binned, y, depth=2)
        pred = apply_binned(tree, binned.codes)
        # rows in the same leaf share the leaf mean
        for leaf in np.unique(pred):
            mask = pred == leaf
            assert y[mask].mean() == pytest.approx(leaf, abs=1e-12)

    def test_depth2_beats_every_depth1_tree(self):
        rng = np.random.default_rng(2)
        X = rng.random((200, 3))
        y = rng.normal(size=200) + 2.0 * (X[:, 0] > 0.4) - 1.5 * (X[:, 2] > 0.7)
        binned = bin_features(X, build_grid(X, 32))
        deep = fit_tree_ls(binned, y, depth=2)
        deep_sse = _sse(apply_binned(deep, binned.codes), y)

        # oracle: exhaustive enumeration of every depth-1 (single-split) tree
        best = _sse(np.full_like(y, y.mean()), y)
        for f in range(3):
            for t in range(binned.grid.n_bins[f] - 1):
                left = binned.codes[:, f] <= t
                if not left.any() or left.all():
                    continue
                pred = np.where(left, y[left].mean(), y[~left].mean())
                best = min(best, _sse(pred, y))
        assert deep_sse <= best + 1e-9

    def test_sse_non_increasing_in_depth(self):
        rng = np.random.default_rng(5)
        X = rng.random((300, 2))
        y = np.sin(6 * X[:, 0]) + rng.normal(0, 0.3, 300)
        binned = bin_features(X, build_grid(X, 64))
        sses = [
            _sse(apply_binned(fit_tree_ls(binned, y, depth=d), binned.codes), y)
            for d in (1, 2, 3, 4)
        ]
        assert all(b <= a + 1e-9 for a, b in zip(sses, sses[1:]))

    def test_empty_input_rejected(self):
        grid = build_grid(np.zeros((2, 1)), 256)
        with pytest.raises(ValueError):
            fit_tree_ls(BinnedMatrix(np.empty((0, 1), dtype=np.int32), grid), np.empty(0), 1)

    def test_non_finite_targets_rejected(self):
        X = np.arange(4.0).reshape(-1, 1)
        binned = bin_features(X, build_grid(X, 256))
        with pytest.raises(ValueError):
            fit_tree_ls(binned, np.array([0.0, np.inf, 1.0, 2.0]), 1)

    def test_determinism(self):
        rng = np.random.default_rng(9)
        X = rng.random((500, 4))
        y = rng.normal(size=500)
        binned = bin_features(X, build_grid(X, 64))
        t1 = fit_tree_ls(binned, y, depth=3)
        t2 = fit_tree_ls(binned, y, depth=3)
        np.testing.assert_array_equal(t1.feature, t2.feature)
        np.testing.assert_array_equal(t1.threshold_bin, t2.threshold_bin)
        np.testing.assert_array_equal(t1.value, t2.value)


class TestPredict:
    def test_single_leaf_constant(self):
        X = np.full((5, 1), 2.0)
        binned = bin_features(X, build_grid(X, 256))
        tree = fit_tree_ls(binned, np.array([1.0, 1.0, 1.0, 1.0, 1.0]), depth=3)
        assert tree_predict(tree, binned.codes[0]) == 1.0

    def test_piecewise_constant_on_cells(self):
        rng = np.random.default_rng(4)
        X = rng.integers(0, 4, size=(200, 2)).astype(float)
        y = rng.normal(size=200)
        binned = bin_features(X, build_grid(X, 256))
        tree = fit_tree_ls(binned, y, depth=3)
        pred = apply_binned(tree, binned.codes)
        # two rows with identical codes always share a prediction
        _, inv = np.unique(binned.codes, axis=0, return_inverse=True)
        for cell in np.unique(inv):
            vals = pred[inv == cell]
            assert np.all(vals == vals[0])

    def test_raw_and_binned_agree_via_cell_walk(self):
        # brute-force walk: route each row manually through the node arrays
        rng = np.random.default_rng(8)
        X = rng.random((300, 3))
        y = rng.normal(size=300) + (X[:, 1] > 0.5)
        binned = bin_features(X, build_grid(X, 32))
        tree = fit_tree_ls(binned, y, depth=3)

        def walk(row_raw):
            node = 0
            while tree.feature[node] >= 0:
                if row_raw[tree.feature[node]] <= tree.threshold_value[node]:
                    node = tree.left[node]
                else:
                    node = tree.right[node]
            return tree.value[node]

        manual = np.array([walk(X[i]) for i in range(X.shape[0])])
        np.testing.assert_array_equal(apply_raw(tree, X), manual)
        np.testing.assert_array_equal(apply_binned(tree, binned.codes), manual)
