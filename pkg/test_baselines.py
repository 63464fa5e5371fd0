import itertools
import math

import numpy as np
import pytest
from scipy.special import expit

import baselines
from baselines import (
    BinningMap,
    IdentityMap,
    IsotonicMap,
    PlattParams,
    apply,
    fit_baseline,
    fit_binning,
    fit_isotonic,
    fit_platt,
    load_map,
    map_from_dict,
    save_map,
)
from errors import DataValidationError
from metrics import auc, brier, ece


def _brute_force_isotonic(y):
    """Best monotone step fit over every split of the sorted points into blocks."""
    n = len(y)
    best, best_fit = np.inf, None
    for cuts in itertools.product([False, True], repeat=n - 1):
        blocks, start = [], 0
        for i, cut in enumerate(cuts, 1):
            if cut:
                blocks.append((start, i))
                start = i
        blocks.append((start, n))
        means = [np.mean(y[a:b]) for a, b in blocks]
        if any(b < a for a, b in zip(means, means[1:])):
            continue
        fit = np.concatenate([np.full(b - a, m) for (a, b), m in zip(blocks, means)])
        sse = float(np.sum((y - fit) ** 2))
        if sse < best - 1e-12:
            best, best_fit = sse, fit
    return best_fit


class TestPlatt:
    def test_recovers_generating_parameters(self):
        rng = np.random.default_rng(0)
        p = rng.random(10**5)
        y = (rng.random(10**5) < expit(2 * p - 1)).astype(int)
        params = fit_platt(p, y)
        assert params.A == pytest.approx(2.0, abs=0.1)
        assert params.B == pytest.approx(-1.0, abs=0.1)

    def test_identity_link(self):
        rng = np.random.default_rng(1)
        p = rng.random(10**5)
        y = (rng.random(10**5) < expit(p)).astype(int)
        params = fit_platt(p, y)
        assert params.A == pytest.approx(1.0, abs=0.1)
        assert params.B == pytest.approx(0.0, abs=0.1)

    def test_positive_slope_keeps_auc(self):
        rng = np.random.default_rng(2)
        p = rng.random(5000)
        y = (rng.random(5000) < p).astype(int)
        params = fit_platt(p, y)
        assert params.A > 0
        assert abs(auc(apply(params, p), y) - auc(apply(IdentityMap(), p), y)) < 1e-12

    def test_single_class(self):
        with pytest.raises(DataValidationError):
            fit_platt([0.2, 0.4, 0.9], [1, 1, 1])

    def test_apply(self):
        assert apply(PlattParams(1.0, 0.0), 0.0) == 0.5

    def test_zero_iterations_returns_start(self):
        params = fit_platt([0.1, 0.4, 0.8, 0.9], [0, 1, 0, 1], max_iter=0)
        assert (params.A, params.B) == (0.0, 0.0)

    def test_rejected_step_keeps_parameters(self, monkeypatch):
        losses = iter([0.5] + [1.0] * 100)
        monkeypatch.setattr(baselines, "_platt_nll", lambda design, outcomes, theta: next(losses))
        params = fit_platt([0.1, 0.4, 0.8, 0.9], [0, 1, 0, 0])
        assert params.A == 0.0
        assert params.B == pytest.approx(math.log(1 / 3))


class TestIsotonic:
    def test_pools_violators(self):
        fitted = fit_isotonic([0.1, 0.2, 0.3, 0.4], [0, 1, 0, 1])
        np.testing.assert_allclose(apply(fitted, np.array([0.1, 0.2, 0.3, 0.4])), [0.0, 0.5, 0.5, 1.0])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(1, 9))
            x = rng.permutation(np.arange(n) / 10.0 + 0.05)
            y = rng.integers(0, 2, n).astype(float)
            if n == 1:
                y = np.array([1.0])
            fitted = fit_isotonic(x, y)
            order = np.argsort(x)
            np.testing.assert_allclose(apply(fitted, x[order]), _brute_force_isotonic(y[order]), atol=1e-12)

    def test_already_monotone(self):
        fitted = fit_isotonic([0.1, 0.1, 0.5, 0.5, 0.9], [0, 1, 1, 1, 1])
        np.testing.assert_allclose(fitted.levels, [0.5, 1.0, 1.0])

    def test_constant_preds(self):
        fitted = fit_isotonic([0.4] * 5, [1, 0, 0, 1, 0])
        assert apply(fitted, 0.1) == pytest.approx(0.4)
        assert apply(fitted, 0.9) == pytest.approx(0.4)

    def test_step_and_clamp(self):
        fitted = IsotonicMap([0.2, 0.6], [0.1, 0.7])
        np.testing.assert_allclose(apply(fitted, np.array([0.0, 0.2, 0.5, 0.6, 1.0])), [0.1, 0.1, 0.1, 0.7, 0.7])
        assert apply(IsotonicMap([0.5], [0.3]), 0.99) == 0.3

    def test_rejects_decreasing_levels(self):
        with pytest.raises(ValueError):
            IsotonicMap([0.1, 0.2], [0.8, 0.2])

    def test_never_worse_than_identity_in_sample(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            p = rng.random(300)
            y = (rng.random(300) < p ** 2).astype(float)
            fitted = fit_isotonic(p, y)
            assert np.sum((apply(fitted, p) - y) ** 2) <= np.sum((p - y) ** 2) + 1e-12


class TestBinning:
    def test_one_bin(self):
        fitted = fit_binning([0.1, 0.5, 0.9, 0.3], [1, 0, 1, 1], n_bins=1)
        assert apply(fitted, 0.77) == pytest.approx(0.75)

    def test_bin_rate_is_empirical(self):
        preds = [0.62, 0.65, 0.7, 0.7, 0.71, 0.2]
        outcomes = [1, 0, 1, 1, 0, 0]
        fitted = fit_binning(preds, outcomes, n_bins=10)
        assert apply(fitted, 0.66) == 0.75
        assert apply(fitted, 0.75) == 0.0

    def test_empty_bins_use_global_rate(self):
        fitted = fit_binning([0.05, 0.95], [0, 1], n_bins=10)
        assert apply(fitted, 0.5) == 0.5

    def test_calibrated_data_barely_moves(self):
        rng = np.random.default_rng(6)
        p = rng.random(10**5)
        y = (rng.random(10**5) < p).astype(int)
        fitted = fit_binning(p, y, n_bins=10)
        assert abs(brier(apply(fitted, p), y) - brier(p, y)) < 0.005

    def test_apply(self):
        assert apply(BinningMap([0.2, 0.8]), 0.75) == 0.8

    @pytest.mark.parametrize("n_bins", [1, 5, 10, 15])
    def test_in_sample_ece_is_zero(self, n_bins):
        rng = np.random.default_rng(n_bins)
        p = rng.random(2000)
        y = (rng.random(2000) < np.sqrt(p)).astype(int)
        fitted = fit_binning(p, y, n_bins=n_bins)
        assert ece(apply(fitted, p), y, n_bins) == pytest.approx(0.0, abs=1e-12)


class TestSerialization:
    @pytest.mark.parametrize("fitted", [
        IdentityMap(),
        PlattParams(1.7, -0.4),
        IsotonicMap([0.1, 0.4], [0.2, 0.9]),
        BinningMap([0.1, 0.5, 0.9]),
    ])
    def test_save_and_load(self, tmp_path, fitted):
        restored = load_map(save_map(fitted, tmp_path / "map.json"))
        assert restored.kind == fitted.kind
        grid = np.linspace(0, 1, 11)
        np.testing.assert_array_equal(apply(restored, grid), apply(fitted, grid))

    def test_invalid_payloads(self):
        with pytest.raises(DataValidationError):
            map_from_dict({"kind": "spline"})
        with pytest.raises(DataValidationError):
            map_from_dict({"kind": "platt", "A": 1.0})

    def test_fit_baseline_dispatch(self):
        assert isinstance(fit_baseline("identity", [0.2], [1]), IdentityMap)
        with pytest.raises(ValueError):
            fit_baseline("temperature", [0.2, 0.8], [0, 1])
