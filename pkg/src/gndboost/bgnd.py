"""Two-stage fitting on split samples, cross-fit averaging, and model I/O.

The fit transforms the response, splits the rows into two halves, boosts the
location on one half and the log-scale on the other with that location
plugged in, and (by default) repeats with the halves swapped.  Predictions
average the two directions' location and log-scale values before the scale is
exponentiated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .boost_location import Ensemble, FitConfig, fit_location
from .boost_scale import ScaleFitConfig, fit_scale
from .common import DataError, FitReport
from .gnd import DEFAULT_CRPS_LEVELS, GndParams, crps_normal, gnd_cdf, gnd_quantile
from .transforms import (
    PowerTransform,
    crps_lognormal,
    pushforward_cdf,
    pushforward_crps,
    pushforward_quantile,
)

MODEL_FILE_VERSION = 1
MIN_TOTAL_ROWS = 40


@dataclass(frozen=True)
class BgndConfig:
    """Bundled controls for the two fitting stages."""

    location: FitConfig = field(default_factory=FitConfig)
    scale: Optional[ScaleFitConfig] = None  # gamma is filled in by fit()
    crossfit: bool = True


@dataclass
class BgndModel:
    """Fitted location/scale forecaster on a power-transformed response.

    ``directions`` holds one (location, log-scale) ensemble pair per split
    direction; with cross-fitting there are two and predictions average the
    pairs on the location and log-scale before exponentiating.
    """

    gamma: float
    power: float
    directions: list  # list of (Ensemble location, Ensemble log_scale)
    crossfit: bool
    schema: dict
    metadata: dict = field(default_factory=dict)

    @property
    def transform(self) -> PowerTransform:
        return PowerTransform(self.power)

    def predict_params(self, X: np.ndarray):
        """Per-row (mu, b) on the transformed scale, cross-fit averaged."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.schema["feature_names"]):
            raise DataError(
                f"feature matrix with {X.shape[1] if X.ndim == 2 else '?'} columns does not "
                f"match model schema with {len(self.schema['feature_names'])} features"
            )
        mu = np.zeros(X.shape[0])
        beta = np.zeros(X.shape[0])
        for loc, scale in self.directions:
            mu += loc.predict(X)
            beta += scale.predict(X)
        mu /= len(self.directions)
        beta /= len(self.directions)
        return mu, np.exp(-beta / self.gamma)

    def _row_params(self, x_row) -> GndParams:
        mu, b = self.predict_params(np.asarray(x_row, dtype=np.float64).reshape(1, -1))
        return GndParams(float(mu[0]), float(b[0]), self.gamma)

    def predict_cdf(self, x_row, y: float) -> float:
        """Original-scale forecast CDF at ``y`` for one feature row."""
        return float(pushforward_cdf(self.transform, self._row_params(x_row), y))

    def predict_quantile(self, x_row, q) -> float:
        """Original-scale forecast quantile for one feature row."""
        return pushforward_quantile(self.transform, self._row_params(x_row), q)

    def forecast_crps(self, x_row, y: float, levels: int = DEFAULT_CRPS_LEVELS) -> float:
        """Original-scale CRPS; closed form for the normal and log-normal
        cases, quantile quadrature otherwise."""
        p = self._row_params(x_row)
        if self.gamma == 2.0 and self.power == 1.0:
            return float(crps_normal(p.mu, p.b, y))
        if self.gamma == 2.0 and self.power == 0.0:
            return float(crps_lognormal(p.mu, p.b, y))
        return pushforward_crps(self.transform, p, y, levels)

    def to_json(self) -> dict:
        return {
            "version": MODEL_FILE_VERSION,
            "kind": "bgnd",
            "gamma": self.gamma,
            "power": self.power,
            "crossfit": self.crossfit,
            "schema": self.schema,
            "directions": [
                {"location": loc.to_json(), "log_scale": scale.to_json()}
                for loc, scale in self.directions
            ],
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "BgndModel":
        directions = [
            (Ensemble.from_json(d["location"]), Ensemble.from_json(d["log_scale"]))
            for d in doc["directions"]
        ]
        return cls(
            gamma=float(doc["gamma"]),
            power=float(doc["power"]),
            directions=directions,
            crossfit=bool(doc["crossfit"]),
            schema=doc["schema"],
            metadata=doc.get("metadata", {}),
        )


def _default_schema(n_features: int) -> dict:
    return {
        "response": "y",
        "timestamp": None,
        "numeric": [f"x{j}" for j in range(n_features)],
        "categorical": {},
        "feature_names": [f"x{j}" for j in range(n_features)],
    }


def fit(
    X: np.ndarray,
    y,
    gamma: float,
    transform: PowerTransform,
    cfg: BgndConfig = BgndConfig(),
    seed: int = 0,
    schema: dict | None = None,
) -> BgndModel:
    """Split, two-stage fit, and optional cross-fit of both directions."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError("feature matrix and response must have matching rows")
    n = y.shape[0]
    if n < MIN_TOTAL_ROWS:
        raise DataError(f"need at least {MIN_TOTAL_ROWS} rows to split and fit, got {n}")
    if transform.power != 1.0:
        bad = np.nonzero(~(y > 0.0))[0]
        if bad.size:
            shown = ", ".join(str(int(i)) for i in bad[:20])
            more = "" if bad.size <= 20 else f" (+{bad.size - 20} more)"
            raise DataError(
                f"transform power={transform.power} requires a positive response; "
                f"offending rows: {shown}{more}"
            )
    z = transform.forward(y) if transform.power != 1.0 else y.astype(np.float64)

    loc_cfg = cfg.location
    scale_cfg = cfg.scale if cfg.scale is not None else ScaleFitConfig(gamma=gamma)
    if scale_cfg.gamma != gamma:
        raise DataError("scale config gamma does not match the model gamma")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n1 = (n + 1) // 2  # odd row counts put the extra row in the first half
    half_a, half_b = perm[:n1], perm[n1:]

    reports = {}

    def one_direction(fit_idx, plug_idx, tag):
        loc, loc_rep = fit_location(X[fit_idx], z[fit_idx], loc_cfg)
        scale, scale_rep = fit_scale(X[plug_idx], z[plug_idx], loc, scale_cfg)
        reports[f"location_{tag}"] = loc_rep
        reports[f"scale_{tag}"] = scale_rep
        return loc, scale

    directions = [one_direction(half_a, half_b, "a")]
    if cfg.crossfit:
        directions.append(one_direction(half_b, half_a, "b"))

    model_schema = schema if schema is not None else _default_schema(X.shape[1])
    metadata = {
        "n": int(n),
        "seed": int(seed),
        "config": {
            "location": {
                "depth": loc_cfg.depth,
                "max_iters": loc_cfg.max_iters,
                "shrinkage": loc_cfg.shrinkage,
                "cv_folds": loc_cfg.cv_folds,
            },
            "scale": {
                "depth": scale_cfg.depth,
                "max_iters": scale_cfg.max_iters,
                "epsilon": scale_cfg.epsilon,
                "nu": scale_cfg.nu,
                "psi": scale_cfg.psi,
                "cv_folds": scale_cfg.cv_folds,
            },
            "crossfit": cfg.crossfit,
        },
        "reports": {k: v.to_dict() for k, v in reports.items()},
    }
    return BgndModel(
        gamma=float(gamma),
        power=float(transform.power),
        directions=directions,
        crossfit=cfg.crossfit,
        schema=model_schema,
        metadata=metadata,
    )


def predict_params(model: BgndModel, X: np.ndarray):
    return model.predict_params(X)


def save_model(model, path) -> None:
    """Write any supported model to a versioned JSON file."""
    doc = model.to_json()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path):
    """Load a model file; dispatches on its ``kind`` discriminator."""
    from . import baselines  # deferred: baselines also imports transforms

    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed model file {path}: {exc.msg} at byte {exc.pos}") from exc
    if not isinstance(doc, dict) or "version" not in doc or "kind" not in doc:
        raise DataError(f"model file {path} lacks version/kind fields")
    if doc["version"] != MODEL_FILE_VERSION:
        raise DataError(
            f"unsupported model file version {doc['version']} (expected {MODEL_FILE_VERSION})"
        )
    kind = doc["kind"]
    try:
        if kind == "bgnd":
            return BgndModel.from_json(doc)
        if kind == "exp_glm":
            return baselines.LinearExpModel.from_json(doc)
        if kind == "lognormal":
            return baselines.LinearLogNormalModel.from_json(doc)
        if kind == "hist_avg":
            return baselines.HistoricalAverage.from_json(doc)
    except (KeyError, TypeError) as exc:
        raise DataError(f"model file {path} has drifted schema: {exc}") from exc
    raise DataError(f"unknown model kind {kind!r} in {path}")
