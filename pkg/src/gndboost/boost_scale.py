"""Stage two: regularized tree boosting of the log-scale parameter.

With the fitted location plugged in, the per-row likelihood risk is
``mean(res_pow * exp(beta) - beta)`` where ``res_pow = |y - mu_hat|**gamma``
and the scale is recovered as ``b = exp(-beta / gamma)``.  The fit performs
functional gradient descent over the span of depth-limited trees with three
regularizers: a unit-norm tree direction whose correlation with the gradient
is at least ``epsilon``, a step budget ``nu / (m + 1)`` scaled by an exact
line search, and a hard sup-norm cap ``psi`` on the iterates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boost_location import Ensemble, _fold_ids
from .common import FitReport
from .trees import (
    DEFAULT_MAX_BINS,
    BinnedMatrix,
    Tree,
    _fit_tree,
    apply_binned,
    bin_features,
    build_grid,
)

MIN_FIT_ROWS = 10
RES_POW_FLOOR = 1e-12


def lambert_w(y: float) -> float:
    """Principal-branch Lambert W for y >= 0: solves w * exp(w) = y.

    Newton iteration; the residual |w e^w - y| is at most 1e-12 * max(1, y).
    """
    if not (y >= 0.0 and math.isfinite(y)):
        raise ValueError(f"lambert_w requires y >= 0, got {y}")
    if y == 0.0:
        return 0.0
    w = math.log1p(y) if y < math.e else math.log(y) - math.log(math.log(y))
    for _ in range(50):
        ew = math.exp(w)
        resid = w * ew - y
        if abs(resid) <= 1e-13 * max(1.0, y):
            break
        w -= resid / (ew * (1.0 + w))
    return w


@dataclass(frozen=True)
class ScaleFitConfig:
    """Controls of the log-scale boosting stage.

    ``nu=None`` resolves to the schedule ``min(0.9, log(n)**(-(gamma+1)/2))``
    and ``psi=None`` to the cap ``W(n**(1/5))``, both from the training size
    of the run at hand.  ``depth=None`` selects depth from ``depth_grid`` by
    K-fold cross-validation on held-out likelihood risk.
    """

    gamma: float
    epsilon: float = 0.5
    nu: float | None = None
    psi: float | None = None
    max_iters: int = 1000
    depth: int | None = None
    grad_tol: float = 1e-10
    line_search_tol: float = 1e-8
    cv_folds: int = 10
    patience: int = 20
    depth_grid: tuple = (1, 2, 3, 4)
    max_bins: int = DEFAULT_MAX_BINS
    seed: int = 0

    def __post_init__(self):
        if not (self.gamma >= 1.0 and math.isfinite(self.gamma)):
            raise ValueError("gamma must be >= 1")
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in (0, 1]")
        if self.nu is not None and not (0.0 < self.nu < 1.0):
            raise ValueError("nu must lie in (0, 1)")
        if self.psi is not None and not self.psi > 0.0:
            raise ValueError("psi must be positive")
        if self.depth is not None and self.depth < 1:
            raise ValueError("depth must be >= 1")

    def resolve_nu(self, n: int) -> float:
        if self.nu is not None:
            return self.nu
        return min(0.9, math.log(max(n, 3)) ** (-(self.gamma + 1.0) / 2.0))

    def resolve_psi(self, n: int) -> float:
        if self.psi is not None:
            return self.psi
        return lambert_w(float(n) ** 0.2)


def empirical_risk(beta_vals, res_pow) -> float:
    """Likelihood risk mean(res_pow * exp(beta) - beta)."""
    beta_vals = np.asarray(beta_vals, dtype=np.float64)
    res_pow = np.asarray(res_pow, dtype=np.float64)
    if beta_vals.shape != res_pow.shape or beta_vals.size == 0:
        raise ValueError("beta values and residual powers must have equal nonzero length")
    if np.any(res_pow < 0.0):
        raise ValueError("residual powers must be nonnegative")
    return float(np.mean(res_pow * np.exp(beta_vals) - beta_vals))


def risk_gradient(beta_vals, res_pow) -> np.ndarray:
    """Per-row derivative of the likelihood risk: res_pow * exp(beta) - 1.

    Averaging this vector within each fundamental cell (sum over the cell's
    rows divided by n) gives the functional gradient of the boosting loop.
    """
    beta_vals = np.asarray(beta_vals, dtype=np.float64)
    res_pow = np.asarray(res_pow, dtype=np.float64)
    if beta_vals.shape != res_pow.shape or beta_vals.size == 0:
        raise ValueError("beta values and residual powers must have equal nonzero length")
    return res_pow * np.exp(beta_vals) - 1.0


def fundamental_cells(binned: BinnedMatrix) -> np.ndarray:
    """Cell index of each row: rows with identical bin codes share a cell."""
    _, ids = np.unique(binned.codes, axis=0, return_inverse=True)
    return ids.astype(np.int64).ravel()


def _cell_grad_norm(grad: np.ndarray, cell_ids: np.ndarray) -> float:
    """Empirical 2-norm of the cell-averaged (functional) gradient."""
    sums = np.bincount(cell_ids, weights=grad)
    counts = np.bincount(cell_ids)
    mask = counts > 0
    return float(np.sqrt(np.sum(sums[mask] ** 2 / counts[mask]) / grad.size))


def eps_gradient(
    binned: BinnedMatrix,
    grad: np.ndarray,
    depth: int,
    epsilon: float,
    cell_ids: np.ndarray | None = None,
):
    """Unit-norm tree approximation of the negative gradient direction.

    Fits a least-squares tree to ``-grad`` and rescales its leaves to unit
    empirical 2-norm.  The reported correlation is the empirical inner product
    of the direction with the negative functional gradient, normalized by the
    functional gradient's norm; if it falls below ``epsilon`` the depth is
    escalated (up to the depth resolving every occupied cell) and the tree is
    refit.  Returns ``(tree, correlation, per_row_direction)``; ``tree`` is
    None when the fitted direction is identically zero, which signals that
    the gradient has no component in the tree span (convergence).
    """
    grad = np.asarray(grad, dtype=np.float64)
    if cell_ids is None:
        cell_ids = fundamental_cells(binned)
    grad_norm = _cell_grad_norm(grad, cell_ids)
    if grad_norm == 0.0:
        return None, 0.0, None
    n_cells = int(cell_ids.max()) + 1
    full_depth = max(1, int(math.ceil(math.log2(max(2, n_cells)))))
    depth = max(1, depth)
    while True:
        tree, fitted = _fit_tree(binned, -grad, depth)
        norm = float(np.sqrt(np.mean(fitted ** 2)))
        if norm == 0.0:
            return None, 0.0, None
        direction = fitted / norm
        corr = float(np.mean(-grad * direction)) / grad_norm
        if corr >= epsilon or depth >= full_depth:
            return tree.scaled(1.0 / norm), corr, direction
        depth += 1


def line_search(beta_vals, res_pow, direction, step_cap: float, tol: float = 1e-8) -> float:
    """Exact minimizer of rho -> risk(beta + rho * step_cap * direction) on (0, 1].

    ``direction`` must be a descent direction for the subtraction-free update
    used here, i.e. its inner product with the gradient must be negative.
    The objective is convex in rho (exponentials plus a linear term), so the
    root of its derivative is found by bisection and clamped to 1.
    """
    beta_vals = np.asarray(beta_vals, dtype=np.float64)
    res_pow = np.asarray(res_pow, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    if step_cap <= 0.0:
        raise ValueError("step_cap must be positive")

    def dphi(rho: float) -> float:
        z = beta_vals + rho * step_cap * direction
        return float(step_cap * np.mean(direction * (res_pow * np.exp(z) - 1.0)))

    slope0 = dphi(0.0)
    if slope0 >= 0.0:
        raise ValueError("direction is not a descent direction")
    if dphi(1.0) < 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if dphi(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class _ScaleBooster:
    """One regularized gradient-boosting run over a fixed training set."""

    def __init__(self, binned: BinnedMatrix, res_pow: np.ndarray, cfg: ScaleFitConfig,
                 depth: int, nu: float, psi: float):
        self.binned = binned
        self.res_pow = res_pow
        self.cfg = cfg
        self.depth = depth
        self.nu = nu
        self.psi = psi
        self.cell_ids = fundamental_cells(binned)
        self.beta = np.zeros(res_pow.shape[0], dtype=np.float64)
        self.stages: list[tuple[float, Tree]] = []
        self.risks = [empirical_risk(self.beta, res_pow)]
        self.correlations: list[float] = []
        self.step_budget = 0.0
        self.m = 0
        self.stop_reason: str | None = None

    def step(self) -> Tree | None:
        """One boosting iteration; returns the appended tree or None on stop."""
        if self.stop_reason is not None:
            return None
        grad = risk_gradient(self.beta, self.res_pow)
        if _cell_grad_norm(grad, self.cell_ids) <= self.cfg.grad_tol:
            self.stop_reason = "gradient_converged"
            return None
        tree, corr, direction = eps_gradient(
            self.binned, grad, self.depth, self.cfg.epsilon, self.cell_ids
        )
        if tree is None:
            self.stop_reason = "gradient_converged"
            return None
        cap = self.nu / (self.m + 1)
        rho = line_search(self.beta, self.res_pow, direction, cap, self.cfg.line_search_tol)
        step_len = rho * cap
        candidate = self.beta + step_len * direction
        if float(np.max(np.abs(candidate))) >= self.psi:
            self.stop_reason = "cap_reached"
            return None
        risk = empirical_risk(candidate, self.res_pow)
        if not risk < self.risks[-1]:
            self.stop_reason = "stalled"
            return None
        self.beta = candidate
        self.stages.append((step_len, tree))
        self.risks.append(risk)
        self.correlations.append(corr)
        self.step_budget += step_len * float(np.max(np.abs(direction)))
        self.m += 1
        return tree.scaled(step_len)


def _prepare_res_pow(y: np.ndarray, mu_vals: np.ndarray, gamma: float) -> np.ndarray:
    res = np.abs(y - mu_vals) ** gamma
    if not np.all(np.isfinite(res)):
        raise ValueError("residuals are not finite")
    return np.maximum(res, RES_POW_FLOOR)


def _cv_select_scale(binned: BinnedMatrix, res_pow: np.ndarray, cfg: ScaleFitConfig, depths):
    """Choose (depth, n_stages) by fold-mean held-out likelihood risk."""
    n = res_pow.shape[0]
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
            n_train = int(train.sum())
            booster = _ScaleBooster(sub, res_pow[train], cfg, depth,
                                    cfg.resolve_nu(n_train), cfg.resolve_psi(n_train))
            val_beta = np.zeros(int(val.sum()), dtype=np.float64)
            boosters.append(booster)
            val_sets.append((binned.codes[val], res_pow[val], val_beta))
        def mean_val_risk():
            return float(np.mean([empirical_risk(vb, rv) for _, rv, vb in val_sets]))
        best_m, best_loss = 0, mean_val_risk()
        for m in range(1, cfg.max_iters + 1):
            stepped = False
            for booster, (val_codes, _, val_beta) in zip(boosters, val_sets):
                tree = booster.step()
                if tree is not None:
                    stepped = True
                    val_beta += apply_binned(tree, val_codes)
            if not stepped:
                break
            loss = mean_val_risk()
            if loss < best_loss:
                best_loss, best_m = loss, m
            elif m - best_m >= cfg.patience:
                break
        results[depth] = (best_m, best_loss)
        if best_key is None or best_loss < results[best_key][1]:
            best_key = depth
    return best_key, results[best_key][0], results


def fit_scale(X: np.ndarray, y, mu_hat, cfg: ScaleFitConfig) -> tuple[Ensemble, FitReport]:
    """Boost the log-scale parameter with the location estimate plugged in.

    ``mu_hat`` is either a location Ensemble or a per-row array of location
    values on the transformed scale.  Residual powers are floored at 1e-12 so
    a zero residual cannot send a cell's maximizer to infinity; the psi cap
    bounds the iterates either way.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("feature matrix and responses must have matching rows")
    if y.shape[0] < MIN_FIT_ROWS:
        raise ValueError(f"need at least {MIN_FIT_ROWS} rows, got {y.shape[0]}")
    mu_vals = mu_hat.predict(X) if isinstance(mu_hat, Ensemble) else np.asarray(mu_hat, dtype=np.float64)
    if mu_vals.shape != y.shape:
        raise ValueError("location values do not match response rows")
    res_pow = _prepare_res_pow(y, mu_vals, cfg.gamma)

    grid = build_grid(X, cfg.max_bins)
    binned = bin_features(X, grid)
    n = y.shape[0]

    cv_results = {}
    if cfg.cv_folds >= 2:
        depths = cfg.depth_grid if cfg.depth is None else (cfg.depth,)
        depth, n_stages, cv_results = _cv_select_scale(binned, res_pow, cfg, depths)
    else:
        depth = cfg.depth if cfg.depth is not None else 3
        n_stages = cfg.max_iters

    booster = _ScaleBooster(binned, res_pow, cfg, depth, cfg.resolve_nu(n), cfg.resolve_psi(n))
    for _ in range(n_stages):
        if booster.step() is None:
            break
    reason = booster.stop_reason or ("cv_selected" if cfg.cv_folds >= 2 else "max_iters")
    report = FitReport(
        losses=booster.risks,
        stop_reason=reason,
        depth=depth,
        n_stages=len(booster.stages),
        correlations=booster.correlations,
        step_budget=booster.step_budget,
        cv_results=cv_results,
    )
    return Ensemble(0.0, tuple(booster.stages)), report


def predict_log_scale(ensemble: Ensemble, X: np.ndarray) -> np.ndarray:
    """Log-scale values beta(x); the scale itself is exp(-beta / gamma)."""
    return ensemble.predict(X)
