"""Scoring machinery and decision-analysis tables."""

import csv
import math

import numpy as np
import pytest

from gndboost.evaluation import (
    crps_mean,
    evaluate_models,
    long_wait_analysis,
    pinball_loss,
    population_nll_normal,
    round_sig,
    write_report,
)
from gndboost.forecasts import LogNormalForecastBatch, PointForecastBatch
from gndboost.gnd import crps_normal


class TestPinball:
    def test_above_prediction(self):
        assert pinball_loss(1.0, 0.0, 0.7) == pytest.approx(0.7)

    def test_below_prediction(self):
        assert pinball_loss(0.0, 1.0, 0.7) == pytest.approx(0.3)

    def test_exact_prediction(self):
        assert pinball_loss(2.0, 2.0, 0.42) == 0.0

    def test_invalid_alpha(self):
        with pytest.raises(ValueError):
            pinball_loss(0.0, 0.0, 1.0)

    def test_minimizer_is_empirical_quantile(self):
        # over a dense candidate grid the pinball minimizer at alpha=0.7 is the
        # empirical 70th percentile, within one grid step
        rng = np.random.default_rng(0)
        y = rng.exponential(2.0, 4000)
        grid = np.linspace(0.0, 15.0, 1501)
        losses = [np.mean(pinball_loss(y, g, 0.7)) for g in grid]
        best = grid[int(np.argmin(losses))]
        target = np.quantile(y, 0.7)
        assert abs(best - target) <= grid[1] - grid[0]

    def test_cost_ratio_at_seventy(self):
        assert round_sig(0.7 / 0.3, 2) == pytest.approx(2.3)


class TestCrpsMean:
    def test_degenerate_at_observations_is_zero(self):
        y = np.array([1.0, 2.0, 3.0])
        assert crps_mean(PointForecastBatch(y.copy()), y) == 0.0

    def test_single_standard_normal(self):
        from gndboost.forecasts import GndForecastBatch

        batch = GndForecastBatch(1.0, 2.0, np.zeros(1), np.ones(1))
        assert crps_mean(batch, np.zeros(1)) == pytest.approx(0.2336950, abs=1e-7)

    def test_mean_equals_brute_force_average(self):
        rng = np.random.default_rng(1)
        mu = rng.normal(0, 1, 50)
        sigma = rng.uniform(0.3, 2.0, 50)
        y = np.exp(rng.normal(mu, sigma))
        batch = LogNormalForecastBatch(mu, sigma)
        per_row = [float(batch.crps(y)[i]) for i in range(50)]
        assert crps_mean(batch, y) == pytest.approx(float(np.mean(per_row)), abs=1e-14)

    def test_list_of_row_handles(self):
        rng = np.random.default_rng(2)
        y = rng.exponential(1.0, 10)
        handles = [PointForecastBatch(np.array([v])) for v in y + 0.5]
        assert crps_mean(handles, y) == pytest.approx(0.5)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            crps_mean(PointForecastBatch(np.zeros(3)), np.zeros(4))


class TestLongWait:
    def test_equal_probabilities_all_actual(self):
        rows = long_wait_analysis(np.full(40, 0.7), np.ones(40, dtype=bool), (0.05, 0.5, 1.0))
        assert all(r["true_positive_rate"] == 1.0 for r in rows)

    def test_perfect_ranking_below_prevalence(self):
        p = np.linspace(1.0, 0.0, 100)
        actual = p > 0.5  # first 50 rows actually long
        rows = long_wait_analysis(p, actual, (0.05, 0.25, 0.5))
        assert all(r["true_positive_rate"] == 1.0 for r in rows)

    def test_hand_case_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(3)
        p = rng.random(20)
        actual = rng.random(20) < 0.6
        fracs = (0.1, 0.25, 0.5, 0.75)
        rows = long_wait_analysis(p, actual, fracs, annual_n=1000, effect=0.5)
        # independent path: stable sort implemented with python sorted()
        order = [i for _, i in sorted(((-p[i], i) for i in range(20)))]
        for f, row in zip(fracs, rows):
            k = max(1, min(20, int(round(f * 20))))
            flagged = order[:k]
            tp = sum(bool(actual[i]) for i in flagged)
            assert row["n_flagged"] == k
            assert row["true_positive_rate"] == pytest.approx(tp / k)
            assert row["deaths_averted"] == pytest.approx(1000 * f * (tp / k) * 0.5)

    def test_ties_broken_by_row_order(self):
        p = np.array([0.5, 0.5, 0.5, 0.5])
        actual = np.array([True, False, False, False])
        rows = long_wait_analysis(p, actual, (0.25,))
        assert rows[0]["true_positive_rate"] == 1.0  # row 0 flagged first

    def test_reported_rounding_two_significant_digits(self):
        rows = long_wait_analysis(
            np.linspace(1, 0, 100), np.ones(100, dtype=bool), (0.15,),
            annual_n=805_000, effect=0.028,
        )
        exact = 805_000 * 0.15 * 1.0 * 0.028
        assert rows[0]["deaths_averted"] == pytest.approx(exact)
        assert rows[0]["deaths_averted_2sig"] == 3400.0  # 3381 rounded to 2 sig digits

    def test_validation(self):
        with pytest.raises(ValueError):
            long_wait_analysis(np.array([1.5]), np.array([True]), (0.5,))
        with pytest.raises(ValueError):
            long_wait_analysis(np.array([]), np.array([], dtype=bool), (0.5,))


class TestPopulationNll:
    def test_value_at_truth(self):
        assert population_nll_normal(0.0, 1.0) == pytest.approx(0.5)

    def test_value_at_hessian_point(self):
        assert population_nll_normal(2.0, 1.0) == pytest.approx(2.5, abs=0)

    def test_invalid_sigma(self):
        with pytest.raises(ValueError):
            population_nll_normal(0.0, 0.0)

    def test_finite_difference_hessian_has_negative_eigenvalue(self):
        h = 1e-4
        f = population_nll_normal
        f_mm = (f(2 + h, 1) - 2 * f(2, 1) + f(2 - h, 1)) / h ** 2
        f_ss = (f(2, 1 + h) - 2 * f(2, 1) + f(2, 1 - h)) / h ** 2
        f_ms = (f(2 + h, 1 + h) - f(2 + h, 1 - h) - f(2 - h, 1 + h) + f(2 - h, 1 - h)) / (4 * h ** 2)
        tr_half = 0.5 * (f_mm + f_ss)
        small = tr_half - math.sqrt((0.5 * (f_mm - f_ss)) ** 2 + f_ms ** 2)
        assert small == pytest.approx((15.0 - math.sqrt(233.0)) / 2.0, abs=1e-6)
        assert small < 0.0


class TestRoundSig:
    def test_examples(self):
        assert round_sig(3246.0, 2) == 3200.0
        assert round_sig(0.23575, 2) == 0.24
        assert round_sig(0.0, 2) == 0.0
        assert round_sig(-1234.0, 2) == -1200.0


class TestEvaluateModels:
    def _toy(self):
        rng = np.random.default_rng(4)
        n = 400
        mu = rng.normal(1.0, 0.3, n)
        y = np.exp(rng.normal(mu, 0.5))
        good = LogNormalForecastBatch(mu, np.full(n, 0.5))
        flat = PointForecastBatch(np.full(n, float(np.median(y))))
        return {"good": good, "flat": flat}, y

    def test_reduction_sign_and_normalization(self):
        batches, y = self._toy()
        rep = evaluate_models(batches, y, benchmark="flat", alphas=(0.7,))
        assert rep.crps_reduction_pct["flat"] == 0.0
        assert rep.crps_reduction_pct["good"] > 0.0
        # antisymmetry up to the normalization change
        rep2 = evaluate_models(batches, y, benchmark="good", alphas=(0.7,))
        lhs = rep.crps_reduction_pct["good"] * rep.mean_crps["flat"]
        rhs = -rep2.crps_reduction_pct["flat"] * rep2.mean_crps["good"]
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_losses_nonnegative(self):
        batches, y = self._toy()
        rep = evaluate_models(batches, y, benchmark="flat", long_wait_cutoff=float(np.median(y)))
        assert all(v >= 0.0 for v in rep.mean_crps.values())
        assert all(v >= 0.0 for v in rep.pinball.values())
        for rows in rep.long_wait.values():
            assert all(0.0 <= r["true_positive_rate"] <= 1.0 for r in rows)

    def test_unknown_benchmark(self):
        batches, y = self._toy()
        with pytest.raises(ValueError):
            evaluate_models(batches, y, benchmark="nope")

    def test_write_report_files(self, tmp_path):
        batches, y = self._toy()
        rep = evaluate_models(batches, y, benchmark="flat", long_wait_cutoff=float(np.median(y)))
        write_report(rep, tmp_path)
        for name in ("crps.csv", "pinball.csv", "long_wait.csv", "long_format.csv"):
            assert (tmp_path / name).exists()
        with open(tmp_path / "pinball.csv") as fh:
            header = next(csv.reader(fh))
        assert header == ["model", "alpha", "cost_ratio_2sig", "pinball_loss"]
        with open(tmp_path / "crps.csv") as fh:
            reader = csv.reader(fh)
            next(reader)
            vals = {row[0]: float(row[1]) for row in reader}
        assert vals["good"] == pytest.approx(rep.mean_crps["good"])
