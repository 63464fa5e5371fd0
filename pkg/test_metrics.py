import json

import numpy as np
import pytest
from scipy.stats import spearmanr

from beta_core import BetaMixture, discretize
from errors import DataValidationError, UndefinedMetricError
from metrics import (
    accuracy,
    auc,
    brier,
    calibration_bin,
    ece,
    eval_kl,
    evaluate,
    log_loss,
    reliability_table,
    uncertainty_curve,
    write_reliability_csv,
    write_uncertainty_csv,
)
from objectives import human_loss


def _pairwise_auc(preds, outcomes):
    pos = [p for p, y in zip(preds, outcomes) if y == 1]
    neg = [p for p, y in zip(preds, outcomes) if y == 0]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


class TestPointMetrics:
    def test_brier(self):
        assert brier([1.0, 0.0, 1.0], [1, 0, 1]) == 0.0
        assert brier([0.5] * 4, [1, 0, 0, 1]) == 0.25

    def test_accuracy(self):
        assert accuracy([0.9, 0.1], [1, 0]) == 1.0
        assert accuracy([0.6, 0.4], [1, 0]) == 1.0
        assert accuracy([0.6, 0.6, 0.4, 0.2], [1, 0, 0, 0]) == 0.75

    def test_log_loss(self):
        assert log_loss([0.5, 0.5], [1, 0]) == pytest.approx(np.log(2))
        assert np.isfinite(log_loss([0.0], [1]))

    @pytest.mark.parametrize("c", [0.0, 0.2, 0.5, 0.9])
    def test_constant_forecast_brier_decomposes(self, c):
        outcomes = [1, 0, 0, 1, 1, 0, 0, 0]
        q = 3 / 8
        assert brier([c] * 8, outcomes) == pytest.approx((c - q) ** 2 + q * (1 - q), abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        preds = rng.random(500)
        outcomes = rng.integers(0, 2, 500)
        order = rng.permutation(500)
        for metric in (brier, accuracy, log_loss, auc, ece):
            assert metric(preds[order], outcomes[order]) == pytest.approx(metric(preds, outcomes), abs=1e-12)

    def test_validation(self):
        with pytest.raises(DataValidationError):
            brier([0.5, 0.5], [1])
        with pytest.raises(DataValidationError):
            brier([1.2], [1])
        with pytest.raises(DataValidationError):
            accuracy([0.5], [2])
        with pytest.raises(DataValidationError):
            brier([], [])


class TestAUC:
    def test_separating(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_ties(self):
        assert auc([0.4] * 6, [0, 1, 0, 1, 1, 0]) == 0.5

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            n = int(rng.integers(2, 201))
            preds = np.round(rng.random(n), 1)
            outcomes = rng.integers(0, 2, n)
            outcomes[0], outcomes[1] = 0, 1
            assert auc(preds, outcomes) == _pairwise_auc(preds, outcomes)

    def test_invariant_under_monotone_maps(self):
        rng = np.random.default_rng(3)
        preds = rng.uniform(0.01, 0.99, 300)
        outcomes = rng.integers(0, 2, 300)
        base = auc(preds, outcomes)
        assert auc(preds ** 3, outcomes) == base
        squashed = 1.0 / (1.0 + np.exp(-3.0 * np.log(preds / (1.0 - preds))))
        assert auc(squashed, outcomes) == base

    def test_single_class_is_undefined(self):
        with pytest.raises(UndefinedMetricError):
            auc([0.2, 0.7], [1, 1])


class TestCalibration:
    def test_bin_partition(self):
        np.testing.assert_array_equal(calibration_bin([0.0, 0.1, 0.10001, 0.65, 1.0], 10), [0, 0, 1, 6, 9])

    def test_perfect_calibration(self):
        assert ece([0.7] * 10, [1] * 7 + [0] * 3) == pytest.approx(0.0, abs=1e-12)

    def test_maximal_miscalibration(self):
        assert ece([1.0] * 5, [0] * 5) == 1.0

    def test_one_bin_is_mean_gap(self):
        rng = np.random.default_rng(9)
        preds = rng.random(200)
        outcomes = rng.integers(0, 2, 200)
        assert ece(preds, outcomes, 1) == pytest.approx(abs(preds.mean() - outcomes.mean()), abs=1e-12)

    def test_worked_example(self):
        preds = [0.05] * 4 + [0.95] * 4
        outcomes = [1, 0, 0, 0, 1, 1, 1, 0]
        assert ece(preds, outcomes, 10) == pytest.approx(0.2, abs=1e-12)

    def test_reliability_on_calibrated_data(self):
        rng = np.random.default_rng(0)
        preds = rng.random(10**5)
        outcomes = (rng.random(10**5) < preds).astype(int)
        rows = reliability_table(preds, outcomes, 10)
        assert len(rows) == 10
        assert sum(r.count for r in rows) == 10**5
        assert max(abs(r.bin_acc - r.bin_mean_pred) for r in rows) < 0.02

    def test_single_bin(self):
        rows = reliability_table([0.31, 0.33, 0.35], [0, 1, 0], 10)
        assert len(rows) == 1
        assert rows[0].count == 3


class TestKL:
    def test_zero_on_matching_histograms(self):
        mixtures = [BetaMixture([2], [5], [1.0]), BetaMixture([3, 9], [9, 3], [0.5, 0.5])]
        assert eval_kl(mixtures, [discretize(m) for m in mixtures]) == pytest.approx(0.0, abs=1e-12)

    def test_mean_of_per_item_losses(self):
        rng = np.random.default_rng(1)
        mixtures = [BetaMixture(rng.uniform(1.1, 9, 2), rng.uniform(1.1, 9, 2), [0.3, 0.7]) for _ in range(5)]
        hists = [discretize(BetaMixture([a], [b], [1.0])) for a, b in rng.uniform(1.1, 9, (5, 2))]
        expected = np.mean([human_loss(m, h) for m, h in zip(mixtures, hists)])
        assert eval_kl(mixtures, hists) == expected

    def test_misaligned(self):
        with pytest.raises(DataValidationError):
            eval_kl([BetaMixture([2], [2], [1.0])], [])


class TestUncertaintyCurve:
    def test_constant_error_is_flat(self):
        curve = uncertainty_curve(np.ones(50), np.full(50, 0.3), np.zeros(50), window=10)
        np.testing.assert_allclose(curve.smoothed_brier, 0.09)
        assert len(curve.points) == 41

    def test_full_window_is_overall_brier(self):
        rng = np.random.default_rng(2)
        preds = rng.random(40)
        outcomes = rng.integers(0, 2, 40)
        curve = uncertainty_curve(rng.random(40), preds, outcomes, window=40)
        assert len(curve.points) == 1
        assert curve.points[0][1] == pytest.approx(brier(preds, outcomes))

    def test_known_error_ranks(self):
        rng = np.random.default_rng(4)
        preds = rng.random(10**4)
        outcomes = (rng.random(10**4) < preds).astype(int)
        curve = uncertainty_curve(preds * (1 - preds), preds, outcomes, window=300)
        rho, _ = spearmanr(np.arange(len(curve.points)), curve.smoothed_brier)
        assert rho > 0.9

    def test_window_larger_than_n(self):
        with pytest.raises(DataValidationError):
            uncertainty_curve([0.1, 0.2], [0.5, 0.5], [0, 1], window=3)


class TestReports:
    def test_evaluate_and_write(self, tmp_path):
        preds = [0.05] * 4 + [0.95] * 4
        outcomes = [1, 0, 0, 0, 1, 1, 1, 0]
        report = evaluate(preds, outcomes, method="identity")
        payload = json.loads(report.to_json())
        assert payload["method"] == "identity"
        assert payload["n"] == 8
        assert payload["ece"] == pytest.approx(0.2)
        assert payload["kl_mean"] is None
        assert len(payload["reliability_bins"]) == 2

        path = write_reliability_csv(report.reliability_bins, tmp_path / "rel.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "bin_mean_pred,bin_acc,count"
        assert lines[1].endswith(",4")

        curve = uncertainty_curve(np.arange(8), preds, outcomes, window=4)
        lines = write_uncertainty_csv(curve, tmp_path / "unc.csv").read_text().splitlines()
        assert lines[0] == "rank,smoothed_brier"
        assert len(lines) == 6
