"""Power transforms between the positive response scale and the fitting scale.

``power == 0`` encodes the log transform, any positive power the pure power
map ``y -> y**power``.  The pure power is used instead of the shifted form
``(y**p - 1)/p`` because the two differ by an affine map and the generalized
normal family is closed under affine location-scale changes, so the implied
original-scale forecast distributions are identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gnd import (
    DEFAULT_CRPS_LEVELS,
    GndParams,
    _norm_cdf,
    crps_quadrature,
    gnd_cdf,
    gnd_quantile,
)

_SQRT2 = math.sqrt(2.0)


@dataclass
class PowerTransform:
    """Monotone map from the positive half line to the fitting scale.

    ``clip_count`` tallies inverse-map inputs that fell below the support
    boundary and were clipped to it; it is diagnostic state only and does not
    participate in equality.
    """

    power: float
    clip_count: int = field(default=0, compare=False)

    def __post_init__(self):
        if not (self.power >= 0.0 and math.isfinite(self.power)):
            raise ValueError(f"power must be >= 0, got {self.power}")

    def forward(self, y):
        """Transformed value; requires y > 0."""
        y_arr = np.asarray(y, dtype=np.float64)
        if np.any(y_arr <= 0.0) or not np.all(np.isfinite(y_arr)):
            raise ValueError("forward transform requires positive finite values")
        if self.power == 0.0:
            out = np.log(y_arr)
        elif self.power == 1.0:
            out = y_arr + 0.0
        else:
            out = y_arr ** self.power
        return float(out) if out.ndim == 0 else out

    def inverse(self, z):
        """Original-scale value.

        Under a fractional power, negative transformed values fall outside the
        map's range; they clip to the support boundary 0 and bump
        ``clip_count``.  The identity transform (power 1) passes values
        through unchanged, as the no-transform case on the real line.
        """
        z_arr = np.asarray(z, dtype=np.float64)
        if self.power == 0.0:
            out = np.exp(z_arr)
        elif self.power == 1.0:
            out = z_arr + 0.0
        else:
            clipped = z_arr < 0.0
            n_clip = int(np.count_nonzero(clipped))
            if n_clip:
                self.clip_count += n_clip
                z_arr = np.where(clipped, 0.0, z_arr)
            out = z_arr ** (1.0 / self.power)
        return float(out) if out.ndim == 0 else out


def pushforward_cdf(t: PowerTransform, p: GndParams, y):
    """CDF of the original-scale forecast implied by ``p`` on the fitting scale."""
    return gnd_cdf(t.forward(y), p)


def pushforward_quantile(t: PowerTransform, p: GndParams, q):
    """Quantile of the original-scale forecast."""
    return t.inverse(gnd_quantile(q, p))


def pushforward_crps(t: PowerTransform, p: GndParams, y, levels: int = DEFAULT_CRPS_LEVELS) -> float:
    """CRPS of the original-scale forecast at ``y`` by quantile quadrature."""
    y = float(y)
    if y <= 0.0:
        raise ValueError("observation must be positive on the original scale")
    return crps_quadrature(lambda alphas: pushforward_quantile(t, p, alphas), y, levels)


def crps_lognormal(mu, sigma, y):
    """Closed-form CRPS of a log-normal forecast (log Y ~ N(mu, sigma^2)) at y > 0."""
    sigma_arr = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma_arr <= 0.0):
        raise ValueError("sigma must be positive")
    y_arr = np.asarray(y, dtype=np.float64)
    if np.any(y_arr <= 0.0):
        raise ValueError("observation must be positive")
    omega = (np.log(y_arr) - mu) / sigma_arr
    mean = np.exp(np.asarray(mu) + 0.5 * sigma_arr * sigma_arr)
    out = y_arr * (2.0 * _norm_cdf(omega) - 1.0) - 2.0 * mean * (
        _norm_cdf(omega - sigma_arr) + _norm_cdf(sigma_arr / _SQRT2) - 1.0
    )
    return float(out) if out.ndim == 0 else out
