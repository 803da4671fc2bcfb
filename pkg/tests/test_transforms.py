"""Power-transform pushforward correctness."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gndboost.gnd import GndParams, crps_normal, crps_quadrature, gnd_quantile, gnd_sample
from gndboost.transforms import (
    PowerTransform,
    crps_lognormal,
    pushforward_cdf,
    pushforward_crps,
    pushforward_quantile,
)


class TestForwardInverse:
    def test_log_cases(self):
        t = PowerTransform(0.0)
        assert t.forward(math.e) == pytest.approx(1.0, abs=1e-12)
        assert t.inverse(0.0) == pytest.approx(1.0, abs=1e-12)

    def test_identity(self):
        t = PowerTransform(1.0)
        assert t.forward(7.3) == 7.3
        assert t.inverse(-0.5) == -0.5  # identity passes negatives through

    def test_fourth_root(self):
        t = PowerTransform(0.25)
        assert t.forward(16.0) == pytest.approx(2.0, abs=1e-12)
        assert t.inverse(2.0) == pytest.approx(16.0, abs=1e-12)

    def test_clip_policy(self):
        t = PowerTransform(0.25)
        assert t.inverse(-0.01) == 0.0
        assert t.clip_count == 1
        t.inverse(np.array([-1.0, 0.5, -2.0]))
        assert t.clip_count == 3

    def test_nonpositive_forward_rejected(self):
        for power in (0.0, 0.25, 1.0):
            with pytest.raises(ValueError):
                PowerTransform(power).forward(0.0)
            with pytest.raises(ValueError):
                PowerTransform(power).forward(-1.0)

    def test_negative_power_rejected(self):
        with pytest.raises(ValueError):
            PowerTransform(-0.5)

    @given(st.sampled_from([0.0, 0.25, 0.5, 1.0]), st.floats(1e-6, 1e6))
    @settings(max_examples=200, deadline=None)
    def test_roundtrip(self, power, y):
        t = PowerTransform(power)
        assert t.inverse(t.forward(y)) == pytest.approx(y, rel=1e-10)


class TestPushforward:
    def test_lognormal_median(self):
        assert pushforward_cdf(PowerTransform(0.0), GndParams(0.0, 1.0, 2.0), 1.0) == pytest.approx(0.5)

    def test_median_preserved_by_power(self):
        assert pushforward_cdf(PowerTransform(0.25), GndParams(2.0, 1.0, 2.0), 16.0) == pytest.approx(0.5)

    def test_normal_quantile_under_log(self):
        val = pushforward_cdf(PowerTransform(0.0), GndParams(0.0, 1.0, 2.0), math.exp(1.96))
        assert val == pytest.approx(0.9750021, abs=1e-7)

    def test_quantile_log_case(self):
        assert pushforward_quantile(PowerTransform(0.0), GndParams(1.0, 0.5, 2.0), 0.5) == pytest.approx(
            math.e, abs=1e-10
        )

    def test_quantile_identity_matches_gnd(self):
        p = GndParams(-1.0, 2.0, 1.5)
        for q in (0.1, 0.5, 0.9):
            assert pushforward_quantile(PowerTransform(1.0), p, q) == gnd_quantile(q, p)

    def test_quantile_fourth_root_roundtrip(self):
        t, p = PowerTransform(0.25), GndParams(1.2, 0.3, 2.0)
        y = pushforward_quantile(t, p, 0.9)
        assert y == pytest.approx(gnd_quantile(0.9, p) ** 4, rel=1e-12)
        assert pushforward_cdf(t, p, y) == pytest.approx(0.9, abs=1e-8)

    def test_quantile_monotone_in_level(self):
        t, p = PowerTransform(0.25), GndParams(1.5, 0.4, 1.5)
        qs = np.linspace(0.01, 0.99, 99)
        vals = pushforward_quantile(t, p, qs)
        assert np.all(np.diff(vals) >= 0.0)

    def test_cdf_of_quantile_is_identity(self):
        t, p = PowerTransform(0.0), GndParams(0.5, 0.7, 1.5)
        qs = np.linspace(0.05, 0.95, 19)
        back = pushforward_cdf(t, p, pushforward_quantile(t, p, qs))
        np.testing.assert_allclose(back, qs, atol=1e-8)


class TestPushforwardCrps:
    def test_degenerate_scale(self):
        t, p = PowerTransform(0.0), GndParams(0.3, 1e-8, 2.0)
        assert pushforward_crps(t, p, math.exp(0.3)) < 1e-6

    def test_lognormal_closed_form_agreement(self):
        val = pushforward_crps(PowerTransform(0.0), GndParams(0.0, 1.0, 2.0), 1.0, levels=2 ** 14)
        assert val == pytest.approx(crps_lognormal(0.0, 1.0, 1.0), abs=1e-5)

    def test_identity_transform_matches_normal(self):
        p = GndParams(2.0, 0.8, 2.0)
        val = pushforward_crps(PowerTransform(1.0), p, 2.5, levels=2 ** 14)
        assert val == pytest.approx(crps_normal(2.0, 0.8, 2.5), abs=1e-6)

    def test_closed_form_lognormal_vs_scipy_quadrature(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            mu = rng.normal(0, 1)
            sigma = rng.uniform(0.2, 1.5)
            y = float(stats.lognorm.rvs(sigma, scale=math.exp(mu), random_state=rng))
            oracle = crps_quadrature(
                lambda a: stats.lognorm.ppf(a, sigma, scale=math.exp(mu)), y, levels=2 ** 14
            )
            assert crps_lognormal(mu, sigma, y) == pytest.approx(oracle, abs=1e-5)

    def test_propriety_smoke(self):
        # draws from the forecast itself score no worse on average than a
        # location-shifted forecast
        t = PowerTransform(0.0)
        for seed in range(5):
            p_true = GndParams(0.5, 0.6, 2.0)
            z = gnd_sample(10 ** 4, p_true, seed=seed)
            y = t.inverse(z)
            own = np.mean(crps_lognormal(p_true.mu, p_true.b, y))
            shifted = np.mean(crps_lognormal(p_true.mu + 0.5, p_true.b, y))
            assert own <= shifted
