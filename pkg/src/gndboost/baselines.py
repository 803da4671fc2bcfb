"""Classical comparators: exponential GLM, log-normal MLE, historical average."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .common import DataError, NumericalError
from .forecasts import (
    ExponentialForecastBatch,
    LogNormalForecastBatch,
    PointForecastBatch,
)

MODEL_FILE_VERSION = 1
NEWTON_MAX_ITERS = 100
NEWTON_GRAD_TOL = 1e-8
WEEK_BINS = 21  # 7 days x three 8-hour blocks


def _design(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("feature matrix must be 2-dimensional")
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _collinear_columns(D: np.ndarray, names: list[str]) -> list[str]:
    """Columns whose QR diagonal is relatively tiny; suspects for collinearity."""
    r = np.linalg.qr(D, mode="r")
    diag = np.abs(np.diag(r))
    scale = diag.max() if diag.size else 1.0
    return [names[j] for j in np.nonzero(diag <= 1e-10 * scale)[0]]


def _newton_maximize(objective, grad_hess, theta0: np.ndarray, what: str) -> np.ndarray:
    """Newton ascent with step halving; converges on mean-gradient inf-norm."""
    theta = theta0.copy()
    value = objective(theta)
    grad_norm = np.inf
    for _ in range(NEWTON_MAX_ITERS):
        grad, hess = grad_hess(theta)
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= NEWTON_GRAD_TOL:
            return theta
        try:
            delta = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"{what}: singular information matrix") from exc
        t = 1.0
        while t > 1e-14:
            cand = theta + t * delta
            cand_value = objective(cand)
            if cand_value > value or (cand_value == value and t == 1.0):
                theta, value = cand, cand_value
                break
            t *= 0.5
        else:
            raise NumericalError(
                f"{what}: step halving stalled at gradient inf-norm {grad_norm:.3e}"
            )
    raise NumericalError(
        f"{what}: no convergence in {NEWTON_MAX_ITERS} iterations "
        f"(last gradient inf-norm {grad_norm:.3e})"
    )


@dataclass
class LinearExpModel:
    """Exponential responses with log-rate linear in the features."""

    coef: np.ndarray  # intercept first
    std_errors: np.ndarray = field(default=None, repr=False)
    schema: dict = field(default_factory=dict)

    def rate(self, X: np.ndarray) -> np.ndarray:
        return np.exp(_design(X) @ self.coef)

    def forecast_batch(self, X: np.ndarray) -> ExponentialForecastBatch:
        return ExponentialForecastBatch(self.rate(X))

    def to_json(self) -> dict:
        return {
            "version": MODEL_FILE_VERSION,
            "kind": "exp_glm",
            "schema": self.schema,
            "coef": self.coef.tolist(),
            "std_errors": None if self.std_errors is None else self.std_errors.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LinearExpModel":
        se = doc.get("std_errors")
        return cls(
            coef=np.asarray(doc["coef"], dtype=np.float64),
            std_errors=None if se is None else np.asarray(se, dtype=np.float64),
            schema=doc["schema"],
        )


def fit_exp_glm(X: np.ndarray, y, schema: dict | None = None) -> LinearExpModel:
    """Maximum likelihood for the exponential GLM by Newton with step halving.

    The mean log-likelihood is mean(x'beta - y * exp(x'beta)); convergence is
    declared when its gradient inf-norm drops to 1e-8.
    """
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0.0):
        raise DataError("exponential GLM requires a positive response")
    D = _design(X)
    names = ["intercept"] + [f"x{j}" for j in range(D.shape[1] - 1)]
    n = y.shape[0]

    def objective(beta):
        eta = D @ beta
        return float(np.mean(eta - y * np.exp(eta)))

    def grad_hess(beta):
        lam = np.exp(D @ beta)
        w = y * lam
        grad = D.T @ (1.0 - w) / n
        hess = -(D.T * w) @ D / n
        return grad, hess

    beta0 = np.zeros(D.shape[1])
    beta0[0] = -np.log(float(y.mean()))
    try:
        beta = _newton_maximize(objective, grad_hess, beta0, "exponential GLM")
    except NumericalError:
        bad = _collinear_columns(D, names)
        if bad:
            raise DataError(f"design matrix is collinear in columns: {', '.join(bad)}")
        raise
    w = y * np.exp(D @ beta)
    info = (D.T * w) @ D  # observed information of the total log-likelihood
    se = np.sqrt(np.diag(np.linalg.inv(info)))
    return LinearExpModel(coef=beta, std_errors=se, schema=schema or {})


@dataclass
class LinearLogNormalModel:
    """Log-normal responses: location and log-sd of log(y) linear in features."""

    loc_coef: np.ndarray       # intercept first
    log_sd_coef: np.ndarray    # intercept first
    loc_std_errors: np.ndarray = field(default=None, repr=False)
    log_sd_std_errors: np.ndarray = field(default=None, repr=False)
    schema: dict = field(default_factory=dict)

    def params(self, X: np.ndarray):
        D = _design(X)
        return D @ self.loc_coef, np.exp(D @ self.log_sd_coef)

    def forecast_batch(self, X: np.ndarray) -> LogNormalForecastBatch:
        mu, sigma = self.params(X)
        return LogNormalForecastBatch(mu, sigma)

    def to_json(self) -> dict:
        return {
            "version": MODEL_FILE_VERSION,
            "kind": "lognormal",
            "schema": self.schema,
            "loc_coef": self.loc_coef.tolist(),
            "log_sd_coef": self.log_sd_coef.tolist(),
            "loc_std_errors": None if self.loc_std_errors is None else self.loc_std_errors.tolist(),
            "log_sd_std_errors": None if self.log_sd_std_errors is None else self.log_sd_std_errors.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LinearLogNormalModel":
        def arr(key):
            v = doc.get(key)
            return None if v is None else np.asarray(v, dtype=np.float64)

        return cls(
            loc_coef=np.asarray(doc["loc_coef"], dtype=np.float64),
            log_sd_coef=np.asarray(doc["log_sd_coef"], dtype=np.float64),
            loc_std_errors=arr("loc_std_errors"),
            log_sd_std_errors=arr("log_sd_std_errors"),
            schema=doc["schema"],
        )


def fit_lognormal_mle(X: np.ndarray, y, schema: dict | None = None) -> LinearLogNormalModel:
    """Two-step MLE: OLS of log(y) for the location, then Newton on the
    likelihood of the squared residuals for the log-sd coefficients."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0.0):
        raise DataError("log-normal MLE requires a positive response")
    D = _design(X)
    names = ["intercept"] + [f"x{j}" for j in range(D.shape[1] - 1)]
    logy = np.log(y)
    loc_coef, _, rank, _ = np.linalg.lstsq(D, logy, rcond=None)
    if rank < D.shape[1]:
        bad = _collinear_columns(D, names)
        raise DataError(f"design matrix is collinear in columns: {', '.join(bad or names)}")
    resid = logy - D @ loc_coef
    r2 = resid ** 2
    n = y.shape[0]

    # NLL contribution per row: x'theta + r^2 exp(-2 x'theta) / 2
    def objective(theta):
        eta = D @ theta
        return -float(np.mean(eta + 0.5 * r2 * np.exp(-2.0 * eta)))

    def grad_hess(theta):
        w = r2 * np.exp(-2.0 * (D @ theta))
        grad = -D.T @ (1.0 - w) / n
        hess = -(D.T * (2.0 * w)) @ D / n
        return grad, hess

    theta0 = np.zeros(D.shape[1])
    theta0[0] = 0.5 * np.log(max(float(r2.mean()), 1e-300))
    theta = _newton_maximize(objective, grad_hess, theta0, "log-normal scale step")

    sigma2 = np.exp(2.0 * (D @ theta))
    loc_info = (D.T / sigma2) @ D
    loc_se = np.sqrt(np.diag(np.linalg.inv(loc_info)))
    w = r2 * np.exp(-2.0 * (D @ theta))
    sd_info = (D.T * (2.0 * w)) @ D
    sd_se = np.sqrt(np.diag(np.linalg.inv(sd_info)))
    return LinearLogNormalModel(
        loc_coef=loc_coef,
        log_sd_coef=theta,
        loc_std_errors=loc_se,
        log_sd_std_errors=sd_se,
        schema=schema or {},
    )


def week_bin(timestamp) -> int:
    """21-bin index: day-of-week (Monday 0) times 3 plus the 8-hour block."""
    return timestamp.weekday() * 3 + timestamp.hour // 8


@dataclass
class HistoricalAverage:
    """Mean response within each of the 21 weekly bins; point forecasts only."""

    bin_means: np.ndarray      # length 21
    global_mean: float
    fallback_bins: list        # bins with no training data, filled with the global mean
    schema: dict = field(default_factory=dict)

    def predict(self, timestamps) -> np.ndarray:
        idx = np.fromiter((week_bin(t) for t in timestamps), dtype=np.int64)
        return self.bin_means[idx]

    def forecast_batch(self, timestamps) -> PointForecastBatch:
        return PointForecastBatch(self.predict(timestamps))

    def to_json(self) -> dict:
        return {
            "version": MODEL_FILE_VERSION,
            "kind": "hist_avg",
            "schema": self.schema,
            "bin_means": self.bin_means.tolist(),
            "global_mean": self.global_mean,
            "fallback_bins": list(self.fallback_bins),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "HistoricalAverage":
        return cls(
            bin_means=np.asarray(doc["bin_means"], dtype=np.float64),
            global_mean=float(doc["global_mean"]),
            fallback_bins=list(doc["fallback_bins"]),
            schema=doc["schema"],
        )


def fit_historical_average(timestamps, y, schema: dict | None = None) -> HistoricalAverage:
    """Bin means over the 7x3 weekly grid; empty bins fall back to the global mean."""
    y = np.asarray(y, dtype=np.float64)
    if len(timestamps) != y.shape[0] or y.shape[0] == 0:
        raise DataError("timestamps and response must have equal nonzero length")
    idx = np.fromiter((week_bin(t) for t in timestamps), dtype=np.int64)
    sums = np.bincount(idx, weights=y, minlength=WEEK_BINS)
    counts = np.bincount(idx, minlength=WEEK_BINS)
    global_mean = float(y.mean())
    means = np.where(counts > 0, sums / np.maximum(counts, 1), global_mean)
    fallback = [int(b) for b in np.nonzero(counts == 0)[0]]
    return HistoricalAverage(
        bin_means=means,
        global_mean=global_mean,
        fallback_bins=fallback,
        schema=schema or {},
    )
