"""Stage one: tree-boosted least-squares estimation of the conditional mean."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .common import FitReport
from .trees import (
    DEFAULT_MAX_BINS,
    BinnedMatrix,
    SplitGrid,
    Tree,
    _fit_tree,
    apply_binned,
    apply_raw,
    bin_features,
    build_grid,
    tree_from_json,
    tree_to_json,
)

MIN_FIT_ROWS = 10


@dataclass(frozen=True)
class Ensemble:
    """Additive sequence of trees: prediction = base + sum(coef * tree)."""

    base: float
    stages: tuple  # tuple of (coefficient, Tree)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("feature matrix must be 2-dimensional")
        out = np.full(X.shape[0], self.base, dtype=np.float64)
        for coef, tree in self.stages:
            out += coef * apply_raw(tree, X)
        return out

    def to_json(self) -> dict:
        return {
            "base": self.base,
            "stages": [{"coef": c, "tree": tree_to_json(t)} for c, t in self.stages],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Ensemble":
        stages = tuple((float(s["coef"]), tree_from_json(s["tree"])) for s in doc["stages"])
        return cls(float(doc["base"]), stages)


@dataclass(frozen=True)
class FitConfig:
    """Location-stage boosting controls.

    ``depth=None`` selects tree depth from ``depth_grid`` by K-fold
    cross-validation; the iteration count is always chosen by early stopping
    on fold-mean validation SSE (patience ``patience``) when ``cv_folds >= 2``,
    otherwise the fit runs to ``max_iters``.
    """

    depth: int | None = None
    max_iters: int = 500
    shrinkage: float = 0.1
    cv_folds: int = 10
    patience: int = 20
    depth_grid: tuple = (1, 2, 3, 4)
    max_bins: int = DEFAULT_MAX_BINS
    seed: int = 0

    def __post_init__(self):
        if self.depth is not None and self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not (0.0 < self.shrinkage <= 1.0):
            raise ValueError("shrinkage must lie in (0, 1]")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


class _L2Booster:
    """Incremental L2 boosting on a fixed binned training set."""

    def __init__(self, binned: BinnedMatrix, y: np.ndarray, depth: int, shrinkage: float):
        self.binned = binned
        self.y = y
        self.depth = depth
        self.shrinkage = shrinkage
        self.base = float(y.mean())
        self.resid = y - self.base
        self.stages: list[tuple[float, Tree]] = []
        self.done = False

    def sse(self) -> float:
        return float(np.dot(self.resid, self.resid))

    def step(self) -> Tree | None:
        """Fit one stage; returns the new tree, or None once converged."""
        if self.done:
            return None
        tree, fitted = _fit_tree(self.binned, self.resid, self.depth)
        if tree.feature.shape[0] == 1:
            # no admissible split left: the single leaf is the residual mean,
            # which is ~0 by construction, so further stages are no-ops
            self.done = True
            return None
        self.resid -= self.shrinkage * fitted
        self.stages.append((self.shrinkage, tree))
        return tree


def _fold_ids(n: int, folds: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    ids = np.empty(n, dtype=np.int32)
    ids[rng.permutation(n)] = np.arange(n) % folds
    return ids


def _cv_select_location(binned: BinnedMatrix, y: np.ndarray, cfg: FitConfig, depths) -> tuple[int, int, dict]:
    """Choose (depth, n_stages) by fold-mean validation SSE with early stopping."""
    n = y.shape[0]
    folds = min(cfg.cv_folds, n)
    fold_ids = _fold_ids(n, folds, cfg.seed)
    results = {}
    best_key = None
    for depth in depths:
        boosters = []
        val_sets = []
        for k in range(folds):
            val = fold_ids == k
            train = ~val
            sub = BinnedMatrix(binned.codes[train], binned.grid)
            booster = _L2Booster(sub, y[train], depth, cfg.shrinkage)
            val_codes = binned.codes[val]
            val_pred = np.full(int(val.sum()), booster.base)
            boosters.append(booster)
            val_sets.append((val_codes, y[val], val_pred))
        def mean_val_sse():
            return float(np.mean([np.mean((yv - pv) ** 2) for _, yv, pv in val_sets]))
        best_m, best_loss = 0, mean_val_sse()
        for m in range(1, cfg.max_iters + 1):
            stepped = False
            for booster, (val_codes, _, val_pred) in zip(boosters, val_sets):
                tree = booster.step()
                if tree is not None:
                    stepped = True
                    val_pred += cfg.shrinkage * apply_binned(tree, val_codes)
            if not stepped:
                break
            loss = mean_val_sse()
            if loss < best_loss:
                best_loss, best_m = loss, m
            elif m - best_m >= cfg.patience:
                break
        results[depth] = (best_m, best_loss)
        if best_key is None or best_loss < results[best_key][1]:
            best_key = depth
    return best_key, results[best_key][0], results


def fit_location(X: np.ndarray, y, cfg: FitConfig = FitConfig()) -> tuple[Ensemble, FitReport]:
    """L2 boosting of the conditional mean on the transformed scale.

    Base value is the target mean; each stage fits a depth-limited tree to the
    residuals and advances by ``shrinkage`` times its prediction, so training
    SSE is non-increasing.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("feature matrix and targets must have matching rows")
    if y.shape[0] < MIN_FIT_ROWS:
        raise ValueError(f"need at least {MIN_FIT_ROWS} rows, got {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")

    if np.all(y == y[0]):
        report = FitReport(losses=[0.0], stop_reason="constant_targets", depth=0, n_stages=0)
        return Ensemble(float(y[0]), ()), report

    grid = build_grid(X, cfg.max_bins)
    binned = bin_features(X, grid)

    cv_results = {}
    if cfg.cv_folds >= 2:
        depths = cfg.depth_grid if cfg.depth is None else (cfg.depth,)
        depth, n_stages, cv_results = _cv_select_location(binned, y, cfg, depths)
    else:
        depth = cfg.depth if cfg.depth is not None else 3
        n_stages = cfg.max_iters

    booster = _L2Booster(binned, y, depth, cfg.shrinkage)
    losses = [booster.sse()]
    reason = "max_iters"
    for m in range(n_stages):
        if booster.step() is None:
            reason = "converged"
            break
        losses.append(booster.sse())
    if cfg.cv_folds >= 2 and reason == "max_iters":
        reason = "cv_selected"
    report = FitReport(
        losses=losses,
        stop_reason=reason,
        depth=depth,
        n_stages=len(booster.stages),
        cv_results=cv_results,
    )
    return Ensemble(booster.base, tuple(booster.stages)), report


def predict_location(ensemble: Ensemble, X: np.ndarray) -> np.ndarray:
    """Conditional-mean prediction on the transformed scale."""
    return ensemble.predict(X)
