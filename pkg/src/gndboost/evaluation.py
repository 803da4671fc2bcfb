"""Distributional scoring and the downstream decision analyses.

Covers mean CRPS comparison against a named benchmark, quantile (pinball)
loss across target percentiles, and the long-wait triage table that converts
flagging accuracy into annual deaths averted.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ANNUAL_HEART_ATTACKS = 805_000
GOLDEN_HOUR_EFFECT = 0.028  # mortality-rate reduction when treated in time
DEFAULT_THRESHOLD_FRACS = (0.05, 0.10, 0.15, 0.20, 0.25)


def pinball_loss(y, yhat, alpha: float):
    """Quantile loss: alpha * (y - yhat) above the prediction, (1 - alpha) below."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie strictly between 0 and 1")
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    out = np.where(y >= yhat, alpha * (y - yhat), (1.0 - alpha) * (yhat - y))
    return float(out) if out.ndim == 0 else out


def crps_mean(forecasts, y) -> float:
    """Mean CRPS over rows; ``forecasts`` is a batch or a list of handles."""
    y = np.asarray(y, dtype=np.float64)
    if hasattr(forecasts, "crps"):
        if len(forecasts) != y.shape[0]:
            raise ValueError("forecast batch length does not match observations")
        return float(np.mean(forecasts.crps(y)))
    if len(forecasts) != y.shape[0]:
        raise ValueError("forecast list length does not match observations")
    vals = [float(np.mean(f.crps(np.atleast_1d(yi)))) for f, yi in zip(forecasts, y)]
    return float(np.mean(vals))


def round_sig(x: float, digits: int = 2) -> float:
    """Round to ``digits`` significant digits (report formatting)."""
    if x == 0.0 or not math.isfinite(x):
        return x
    return round(x, -int(math.floor(math.log10(abs(x)))) + digits - 1)


def long_wait_analysis(
    p_long,
    actual_long,
    threshold_fracs=DEFAULT_THRESHOLD_FRACS,
    annual_n: int = ANNUAL_HEART_ATTACKS,
    effect: float = GOLDEN_HOUR_EFFECT,
) -> list[dict]:
    """Triage table: flag the top fraction of rows by long-wait probability.

    For each fraction the flagged set is the top ``round(f * n)`` rows by
    forecast probability (ties broken by stable row order) and the reported
    rate is the share of flagged rows that are actually long -- the fraction
    of prioritized patients whose prioritization was warranted, which is what
    the deaths-averted arithmetic ``annual_n * f * rate * effect`` needs.
    Deaths averted are kept exact and also rounded to 2 significant digits.
    """
    p = np.asarray(p_long, dtype=np.float64)
    actual = np.asarray(actual_long, dtype=bool)
    if p.shape != actual.shape or p.size == 0:
        raise ValueError("probabilities and flags must have equal nonzero length")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    n = p.size
    order = np.argsort(-p, kind="stable")
    rows = []
    for f in threshold_fracs:
        if not (0.0 < f <= 1.0):
            raise ValueError("threshold fractions must lie in (0, 1]")
        k = max(1, min(n, int(round(f * n))))
        flagged = order[:k]
        tp = int(actual[flagged].sum())
        tpr = tp / k
        deaths = annual_n * f * tpr * effect
        rows.append(
            {
                "threshold_frac": f,
                "n_flagged": k,
                "true_positive_rate": tpr,
                "deaths_averted": deaths,
                "deaths_averted_2sig": round_sig(deaths, 2),
            }
        )
    return rows


def population_nll_normal(mu: float, sigma: float) -> float:
    """Expected negative log-likelihood (modulo constants) of candidate
    N(mu, sigma^2) when the data are standard normal."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    return math.log(sigma) + (1.0 + mu * mu) / (2.0 * sigma * sigma)


def model_forecast_batch(model, dataset):
    """Per-row forecast handles of any supported model on a dataset."""
    from .baselines import HistoricalAverage, LinearExpModel, LinearLogNormalModel
    from .bgnd import BgndModel
    from .forecasts import GndForecastBatch

    if isinstance(model, BgndModel):
        mu, b = model.predict_params(dataset.X)
        return GndForecastBatch(model.power, model.gamma, mu, b)
    if isinstance(model, HistoricalAverage):
        if dataset.timestamps is None:
            raise ValueError("historical-average forecasts need a timestamp column")
        return model.forecast_batch(dataset.timestamps)
    if isinstance(model, (LinearExpModel, LinearLogNormalModel)):
        return model.forecast_batch(dataset.X)
    raise TypeError(f"unsupported model type {type(model).__name__}")


@dataclass
class EvalReport:
    """Comparison metrics of several forecast models on one test set."""

    benchmark: str
    mean_crps: dict = field(default_factory=dict)             # model -> value
    crps_reduction_pct: dict = field(default_factory=dict)    # model -> % vs benchmark
    pinball: dict = field(default_factory=dict)               # (model, alpha) -> value
    long_wait: dict = field(default_factory=dict)             # model -> triage rows


def evaluate_models(
    batches: dict,
    y,
    benchmark: str,
    alphas=(0.6, 0.65, 0.7, 0.75, 0.8),
    long_wait_cutoff: float | None = None,
    threshold_fracs=DEFAULT_THRESHOLD_FRACS,
    annual_n: int = ANNUAL_HEART_ATTACKS,
    effect: float = GOLDEN_HOUR_EFFECT,
) -> EvalReport:
    """Score every model's forecast batch against the observations."""
    if benchmark not in batches:
        raise ValueError(f"benchmark {benchmark!r} is not among the evaluated models")
    y = np.asarray(y, dtype=np.float64)
    report = EvalReport(benchmark=benchmark)
    for name, batch in batches.items():
        report.mean_crps[name] = crps_mean(batch, y)
    bench = report.mean_crps[benchmark]
    for name, value in report.mean_crps.items():
        report.crps_reduction_pct[name] = 100.0 * (bench - value) / bench
    for name, batch in batches.items():
        for alpha in alphas:
            yhat = batch.quantile(alpha)
            report.pinball[(name, alpha)] = float(np.mean(pinball_loss(y, yhat, alpha)))
    if long_wait_cutoff is not None:
        actual = y > long_wait_cutoff
        for name, batch in batches.items():
            p = np.clip(batch.prob_exceed(long_wait_cutoff), 0.0, 1.0)
            report.long_wait[name] = long_wait_analysis(
                p, actual, threshold_fracs, annual_n, effect
            )
    return report


def write_report(report: EvalReport, outdir) -> None:
    """Emit the wide CSV tables plus a plot-ready long-format CSV."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    long_rows = []

    with open(outdir / "crps.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "mean_crps", "reduction_pct_vs_" + report.benchmark])
        for name in report.mean_crps:
            w.writerow([name, repr(report.mean_crps[name]), repr(report.crps_reduction_pct[name])])
            long_rows.append((name, "mean_crps", report.mean_crps[name]))
            long_rows.append((name, "crps_reduction_pct", report.crps_reduction_pct[name]))

    with open(outdir / "pinball.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "alpha", "cost_ratio_2sig", "pinball_loss"])
        for (name, alpha), value in report.pinball.items():
            ratio = round_sig(alpha / (1.0 - alpha), 2)
            w.writerow([name, repr(alpha), repr(ratio), repr(value)])
            long_rows.append((name, f"pinball@{alpha}", value))

    if report.long_wait:
        with open(outdir / "long_wait.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["model", "threshold_frac", "n_flagged", "true_positive_rate",
                 "deaths_averted", "deaths_averted_2sig"]
            )
            for name, rows in report.long_wait.items():
                for r in rows:
                    w.writerow(
                        [name, repr(r["threshold_frac"]), r["n_flagged"],
                         repr(r["true_positive_rate"]), repr(r["deaths_averted"]),
                         repr(r["deaths_averted_2sig"])]
                    )
                    long_rows.append((name, f"tpr@{r['threshold_frac']}", r["true_positive_rate"]))
                    long_rows.append((name, f"deaths_averted@{r['threshold_frac']}", r["deaths_averted"]))

    with open(outdir / "long_format.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "metric", "value"])
        for name, metric, value in long_rows:
            w.writerow([name, metric, repr(value)])
