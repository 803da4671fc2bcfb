"""CSV ingestion, feature encoding, and synthetic data generation.

CSV dialect: comma-separated UTF-8 with a header row, ``.`` decimal, quoted
strings.  Categorical columns are one-hot encoded with lexicographic level
order; a declared timestamp column (ISO-8601) contributes four cyclic
features with the hour-of-week origin at Monday 00:00.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .common import DataError

HOURS_PER_DAY = 24.0
HOURS_PER_WEEK = 24.0 * 7.0
_CYCLIC_SUFFIXES = ("sin_day", "cos_day", "sin_week", "cos_week")


def encode_cyclic(t: datetime):
    """(sin, cos) pairs of the daily and weekly phase of a timestamp."""
    h_day = t.hour + t.minute / 60.0 + t.second / 3600.0 + t.microsecond / 3.6e9
    h_week = t.weekday() * 24.0 + h_day
    return (
        math.sin(2.0 * math.pi * h_day / HOURS_PER_DAY),
        math.cos(2.0 * math.pi * h_day / HOURS_PER_DAY),
        math.sin(2.0 * math.pi * h_week / HOURS_PER_WEEK),
        math.cos(2.0 * math.pi * h_week / HOURS_PER_WEEK),
    )


@dataclass
class Dataset:
    """Encoded feature matrix with response and optional timestamps."""

    feature_names: list
    X: np.ndarray
    y: np.ndarray | None
    response_name: str | None
    timestamps: list | None = None
    dropped_rows: int = 0
    schema: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]


def _cyclic_names(col: str) -> list:
    return [f"{col}_{s}" for s in _CYCLIC_SUFFIXES]


def _build_schema(response, timestamp, numeric, categorical) -> dict:
    feature_names = list(numeric)
    for col, levels in categorical.items():
        feature_names.extend(f"{col}={lev}" for lev in levels)
    if timestamp is not None:
        feature_names.extend(_cyclic_names(timestamp))
    return {
        "response": response,
        "timestamp": timestamp,
        "numeric": list(numeric),
        "categorical": {col: list(levels) for col, levels in categorical.items()},
        "feature_names": feature_names,
    }


def _parse_float(text: str):
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _parse_timestamp(text: str):
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        return None


def load_csv(path, response: str | None, timestamp: str | None = None,
             schema: dict | None = None) -> Dataset:
    """Read a CSV into an encoded Dataset.

    Without ``schema``, column types are inferred (a column is numeric when
    every non-missing value parses as a float) and categorical levels are the
    lexicographically sorted observed values.  With ``schema`` (from a fitted
    model) the stored column set and level maps are reused, so the matrix
    layout matches training exactly; unseen categorical levels encode to an
    all-zero block.  Rows with missing or unparseable values are dropped and
    counted.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [row for row in reader if row]

    col_idx = {name: j for j, name in enumerate(header)}
    if schema is not None:
        response = schema["response"] if response is None else response
        timestamp = schema["timestamp"]
        numeric = list(schema["numeric"])
        categorical = {c: list(v) for c, v in schema["categorical"].items()}
        known = set(numeric) | set(categorical)
    else:
        numeric, categorical, known = [], {}, set()

    has_response = response is not None and response in col_idx
    if response is not None and not has_response and schema is None:
        raise DataError(f"{path}: missing response column {response!r}")
    if timestamp is not None and timestamp not in col_idx:
        raise DataError(f"{path}: missing timestamp column {timestamp!r}")

    special = {c for c in (response, timestamp) if c is not None}
    if schema is None:
        feature_cols = [c for c in header if c not in special]
        for col in feature_cols:
            j = col_idx[col]
            values = [r[j].strip() for r in rows]
            if all(_parse_float(v) is not None for v in values if v != ""):
                numeric.append(col)
            else:
                categorical[col] = sorted({v for v in values if v != ""})
    else:
        missing = [c for c in known if c not in col_idx]
        if missing:
            raise DataError(f"{path}: columns required by the model schema are absent: {', '.join(sorted(missing))}")

    out_schema = _build_schema(response, timestamp, numeric, categorical)
    feature_names = out_schema["feature_names"]
    level_pos = {
        col: {lev: k for k, lev in enumerate(levels)}
        for col, levels in categorical.items()
    }

    X_rows, y_vals, ts_vals = [], [], []
    dropped = 0
    n_cols = len(header)
    for row in rows:
        if len(row) != n_cols:
            dropped += 1
            continue
        cells = [c.strip() for c in row]
        feats = []
        ok = True
        for col in numeric:
            v = _parse_float(cells[col_idx[col]]) if cells[col_idx[col]] != "" else None
            if v is None:
                ok = False
                break
            feats.append(v)
        if ok:
            for col, levels in categorical.items():
                raw = cells[col_idx[col]]
                if raw == "":
                    ok = False
                    break
                block = [0.0] * len(levels)
                pos = level_pos[col].get(raw)
                if pos is not None:
                    block[pos] = 1.0
                elif schema is None:
                    ok = False
                    break
                feats.extend(block)
        ts = None
        if ok and timestamp is not None:
            ts = _parse_timestamp(cells[col_idx[timestamp]])
            if ts is None:
                ok = False
            else:
                feats.extend(encode_cyclic(ts))
        yv = None
        if ok and has_response:
            yv = _parse_float(cells[col_idx[response]])
            if yv is None:
                ok = False
        if not ok:
            dropped += 1
            continue
        X_rows.append(feats)
        if has_response:
            y_vals.append(yv)
        if timestamp is not None:
            ts_vals.append(ts)

    if not X_rows:
        raise DataError(f"{path}: no usable rows after dropping {dropped} invalid rows")
    X = np.asarray(X_rows, dtype=np.float64).reshape(len(X_rows), len(feature_names))
    return Dataset(
        feature_names=feature_names,
        X=X,
        y=np.asarray(y_vals, dtype=np.float64) if has_response else None,
        response_name=response,
        timestamps=ts_vals if timestamp is not None else None,
        dropped_rows=dropped,
        schema=out_schema,
    )


def write_csv(ds: Dataset, path, raw_columns: dict | None = None) -> None:
    """Write the dataset's raw columns (not the encoded expansions).

    ``raw_columns`` maps column name to a sequence of values; by default the
    numeric schema columns are taken from the matrix.  Floats are written with
    shortest round-trip formatting so reloading reproduces them exactly.
    """
    cols: dict = {}
    if raw_columns is not None:
        cols.update(raw_columns)
    else:
        for col in ds.schema.get("numeric", []):
            cols[col] = ds.X[:, ds.feature_names.index(col)]
    if ds.timestamps is not None:
        cols[ds.schema["timestamp"]] = [t.isoformat() for t in ds.timestamps]
    if ds.y is not None:
        cols[ds.response_name] = ds.y

    names = list(cols)
    n = len(next(iter(cols.values()))) if cols else 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for i in range(n):
            out = []
            for name in names:
                v = cols[name][i]
                out.append(repr(float(v)) if isinstance(v, (float, np.floating)) else v)
            w.writerow(out)


@dataclass(frozen=True)
class SimConfig:
    """Synthetic generator settings.

    ``kind="piecewise-cells"`` draws features uniformly on [0, 1]^p and gives
    each break-delimited cell its own true location and scale on the
    transformed scale, so the cell table is an exact oracle.
    ``kind="sinusoidal-time"`` draws timestamps and modulates location and
    scale with daily/weekly sine waves.
    """

    n: int
    seed: int
    gamma: float
    power: float
    kind: str = "piecewise-cells"
    response: str = "y"
    # piecewise-cells
    feature_names: tuple = ("x0", "x1")
    breaks: tuple = ((0.5,), (0.5,))
    mu_cells: tuple = (0.0, 0.0, 0.0, 0.0)
    b_cells: tuple = (1.0, 1.0, 1.0, 1.0)
    # sinusoidal-time
    timestamp: str = "arrived_at"
    start: str = "2024-01-01T00:00:00"
    horizon_days: float = 56.0
    mu_base: float = 0.0
    mu_day_amp: float = 0.0
    mu_week_amp: float = 0.0
    b_base: float = 1.0
    b_day_amp: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise DataError("n must be >= 1")
        if not self.gamma >= 1.0:
            raise DataError("gamma must be >= 1")
        if not self.power >= 0.0:
            raise DataError("power must be >= 0")
        if self.kind not in ("piecewise-cells", "sinusoidal-time"):
            raise DataError(f"unknown generator kind {self.kind!r}")
        if self.kind == "piecewise-cells":
            n_cells = 1
            for br in self.breaks:
                if any(not (0.0 < t < 1.0) for t in br) or list(br) != sorted(set(br)):
                    raise DataError("breaks must be strictly increasing within (0, 1)")
                n_cells *= len(br) + 1
            if len(self.feature_names) != len(self.breaks):
                raise DataError("feature_names and breaks must align")
            if len(self.mu_cells) != n_cells or len(self.b_cells) != n_cells:
                raise DataError(f"cell tables must list {n_cells} cells in row-major order")
            if any(b <= 0.0 for b in self.b_cells):
                raise DataError("cell scales must be positive")
        else:
            if self.b_base - abs(self.b_day_amp) <= 0.0:
                raise DataError("sinusoidal scale must stay positive")


def sim_config_from_dict(doc: dict) -> SimConfig:
    """Build a SimConfig from a parsed TOML/JSON document."""
    kw = dict(doc)
    features = kw.pop("features", None)
    if features is not None:
        kw["feature_names"] = tuple(f["name"] for f in features)
        kw["breaks"] = tuple(tuple(f["breaks"]) for f in features)
    for key in ("mu_cells", "b_cells"):
        if key in kw:
            kw[key] = tuple(kw[key])
    try:
        return SimConfig(**kw)
    except TypeError as exc:
        raise DataError(f"invalid simulation config: {exc}") from exc


def _cell_index(X: np.ndarray, breaks) -> np.ndarray:
    """Row-major cell id of each row over the per-feature break grid."""
    idx = np.zeros(X.shape[0], dtype=np.int64)
    for j, br in enumerate(breaks):
        idx = idx * (len(br) + 1) + np.searchsorted(np.asarray(br), X[:, j], side="right")
    return idx


def simulate_dataset(cfg: SimConfig):
    """Generate one dataset and the exact ground-truth parameter table.

    Returns ``(dataset, truth_rows)``; for the piecewise generator the truth
    rows carry the per-cell bounds with the transformed-scale location and
    scale (exact cell averages, since both are constant within a cell), for
    the sinusoidal generator one row per observation with its true values.
    """
    from .transforms import PowerTransform

    rng = np.random.default_rng(cfg.seed)
    transform = PowerTransform(cfg.power)

    if cfg.kind == "piecewise-cells":
        p = len(cfg.feature_names)
        X = rng.random((cfg.n, p))
        cells = _cell_index(X, cfg.breaks)
        mu = np.asarray(cfg.mu_cells, dtype=np.float64)[cells]
        b = np.asarray(cfg.b_cells, dtype=np.float64)[cells]
        timestamps = None
        numeric = list(cfg.feature_names)
    else:
        start = datetime.fromisoformat(cfg.start)
        offsets = rng.random(cfg.n) * cfg.horizon_days * 24.0
        timestamps = [start + timedelta(hours=float(h)) for h in offsets]
        enc = np.asarray([encode_cyclic(t) for t in timestamps], dtype=np.float64)
        X = enc
        mu = cfg.mu_base + cfg.mu_day_amp * enc[:, 0] + cfg.mu_week_amp * enc[:, 2]
        b = cfg.b_base + cfg.b_day_amp * enc[:, 0]
        numeric = []

    t_draw = rng.standard_gamma(1.0 / cfg.gamma, size=cfg.n)
    signs = rng.integers(0, 2, size=cfg.n) * 2 - 1
    w = signs * (cfg.gamma * t_draw) ** (1.0 / cfg.gamma)
    z = mu + b * w
    y = transform.inverse(z)

    schema = _build_schema(
        cfg.response,
        cfg.timestamp if cfg.kind == "sinusoidal-time" else None,
        numeric,
        {},
    )
    ds = Dataset(
        feature_names=schema["feature_names"],
        X=X,
        y=np.asarray(y, dtype=np.float64),
        response_name=cfg.response,
        timestamps=timestamps,
        schema=schema,
    )

    if cfg.kind == "piecewise-cells":
        truth = []
        n_cells = len(cfg.mu_cells)
        sizes = [len(br) + 1 for br in cfg.breaks]
        for cell in range(n_cells):
            row = {"cell": cell}
            rem = cell
            for j in reversed(range(len(sizes))):
                pos = rem % sizes[j]
                rem //= sizes[j]
                edges = [0.0, *cfg.breaks[j], 1.0]
                row[f"{cfg.feature_names[j]}_lo"] = edges[pos]
                row[f"{cfg.feature_names[j]}_hi"] = edges[pos + 1]
            row["mu_star"] = float(cfg.mu_cells[cell])
            row["b_star"] = float(cfg.b_cells[cell])
            truth.append(row)
    else:
        truth = [
            {"row": i, "mu": float(mu[i]), "b": float(b[i])}
            for i in range(cfg.n)
        ]
    return ds, truth


def write_truth_csv(truth_rows: list, path) -> None:
    if not truth_rows:
        raise DataError("empty truth table")
    names = list(truth_rows[0])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in truth_rows:
            w.writerow([repr(float(row[k])) if isinstance(row[k], float) else row[k] for k in names])
