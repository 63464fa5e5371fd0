import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import betainc
from scipy.stats import beta as beta_dist

from beta_core import (
    BetaMixture,
    BetaParams,
    Histogram,
    beta_mean,
    beta_variance,
    bin_index,
    discretize,
    log_pdf,
    marginal_likelihood,
    midpoint_grid,
    mixture_mean,
    mixture_pdf,
    mixture_variance,
    moment_match,
    sample,
    sample_mixture,
)


def _random_mixture(rng, max_components=5):
    k = int(rng.integers(1, max_components + 1))
    return BetaMixture(rng.uniform(1.1, 60.0, k), rng.uniform(1.1, 60.0, k), rng.dirichlet(np.ones(k)))


class TestValueTypes:
    @pytest.mark.parametrize("alpha, beta", [(0.0, 1.0), (1.0, -2.0), (math.inf, 1.0), (math.nan, 1.0)])
    def test_beta_params_rejects_invalid_shapes(self, alpha, beta):
        with pytest.raises(ValueError):
            BetaParams(alpha, beta)

    def test_mixture_rejects_weights_off_simplex(self):
        with pytest.raises(ValueError):
            BetaMixture([2.0, 3.0], [2.0, 3.0], [0.5, 0.6])

    def test_mixture_rejects_ragged_components(self):
        with pytest.raises(ValueError):
            BetaMixture([2.0, 3.0], [2.0], [0.5, 0.5])

    def test_mixture_arrays_are_read_only(self):
        m = BetaMixture([2.0], [3.0], [1.0])
        with pytest.raises(ValueError):
            m.alphas[0] = 5.0

    def test_histogram_must_sum_to_one(self):
        with pytest.raises(ValueError):
            Histogram(np.full(10, 0.2))
        with pytest.raises(ValueError):
            Histogram(np.array([1.5, -0.5]))


class TestSingleBeta:
    @pytest.mark.parametrize("alpha, beta, expected", [(50, 10, 0.833), (1, 1, 0.5), (10, 50, 0.167)])
    def test_mean(self, alpha, beta, expected):
        assert beta_mean(BetaParams(alpha, beta)) == pytest.approx(expected, abs=5e-4)

    def test_variance(self):
        assert beta_variance(BetaParams(2, 2)) == pytest.approx(0.05)
        assert beta_variance(BetaParams(1, 1)) == pytest.approx(1 / 12)

    def test_variance_matches_monte_carlo(self):
        p = BetaParams(50, 10)
        x = sample(p, 10**6, seed=3)
        se = math.sqrt(np.mean((x - x.mean()) ** 4) - x.var() ** 2) / math.sqrt(x.size)
        assert abs(x.var() - beta_variance(p)) < 3 * se

    def test_log_pdf_values(self):
        assert log_pdf(BetaParams(1, 1), 0.3) == pytest.approx(0.0, abs=1e-12)
        assert log_pdf(BetaParams(2, 1), 0.5) == pytest.approx(0.0, abs=1e-12)
        assert log_pdf(BetaParams(3.5, 7.2), 0.21) == pytest.approx(beta_dist.logpdf(0.21, 3.5, 7.2), rel=1e-10)

    def test_log_pdf_integrates_to_one(self):
        n = 10**5
        x = (np.arange(n) + 0.5) / n
        total = sum(math.exp(log_pdf(BetaParams(5, 5), v)) for v in x) / n
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_mean_matches_quadrature(self):
        rng = np.random.default_rng(11)
        for alpha, beta in rng.uniform(1.1, 40.0, size=(20, 2)):
            p = BetaParams(alpha, beta)
            first_moment, _ = integrate.quad(lambda x: x * math.exp(log_pdf(p, x)), 0.0, 1.0,
                                             epsabs=1e-12, epsrel=1e-10, limit=200)
            assert first_moment == pytest.approx(beta_mean(p), rel=1e-7)

    @pytest.mark.parametrize("x", [0.0, 1.0, -0.1, 1.2])
    def test_log_pdf_outside_open_interval(self, x):
        with pytest.raises(ValueError):
            log_pdf(BetaParams(2, 2), x)

    def test_marginal_likelihood_closed_form(self):
        assert marginal_likelihood(BetaParams(3, 2), 1) == pytest.approx(0.6)
        assert marginal_likelihood(BetaParams(3, 2), 0) == pytest.approx(0.4)
        assert marginal_likelihood(BetaParams(1, 1), 1) == pytest.approx(0.5)
        with pytest.raises(ValueError):
            marginal_likelihood(BetaParams(1, 1), 2)

    def test_marginal_likelihood_matches_quadrature(self):
        rng = np.random.default_rng(0)
        for alpha, beta in rng.uniform(1.1, 60.0, size=(200, 2)):
            p = BetaParams(alpha, beta)
            mass_yes, _ = integrate.quad(lambda t: t * beta_dist.pdf(t, alpha, beta), 0.0, 1.0,
                                         epsabs=1e-12, epsrel=1e-12, limit=200)
            mass_no, _ = integrate.quad(lambda t: (1 - t) * beta_dist.pdf(t, alpha, beta), 0.0, 1.0,
                                        epsabs=1e-12, epsrel=1e-12, limit=200)
            assert abs(mass_yes - marginal_likelihood(p, 1)) < 1e-6
            assert abs(mass_no - marginal_likelihood(p, 0)) < 1e-6

    @pytest.mark.parametrize("alpha, beta, expected", [(5, 5, 0.5), (50, 10, 50 / 60)])
    def test_sample_mean(self, alpha, beta, expected):
        assert abs(sample(BetaParams(alpha, beta), 10**6, seed=1).mean() - expected) < 0.002

    def test_sample_is_deterministic(self):
        p = BetaParams(2.5, 4.0)
        np.testing.assert_array_equal(sample(p, 1000, seed=7), sample(p, 1000, seed=7))

    def test_sample_size_must_be_positive(self):
        with pytest.raises(ValueError):
            sample(BetaParams(2, 2), 0)


class TestMixtures:
    @pytest.mark.parametrize("alphas, betas, weights, expected", [
        ([3], [2], [1.0], 0.6),
        ([2, 2], [2, 2], [0.5, 0.5], 0.5),
        ([50, 10], [10, 50], [0.5, 0.5], 0.5),
    ])
    def test_mixture_mean(self, alphas, betas, weights, expected):
        assert mixture_mean(BetaMixture(alphas, betas, weights)) == pytest.approx(expected)

    def test_mixture_variance_reduces_to_single(self):
        assert mixture_variance(BetaMixture([2], [2], [1.0])) == pytest.approx(0.05)
        assert mixture_variance(BetaMixture([1.0001], [1.0001], [1.0])) == pytest.approx(1 / 12, abs=1e-4)

    def test_bimodal_variance_exceeds_components(self):
        m = BetaMixture([50, 10], [10, 50], [0.5, 0.5])
        assert mixture_variance(m) > beta_variance(BetaParams(50, 10))

    @pytest.mark.slow
    def test_moments_match_monte_carlo(self):
        # 40 comparisons share one seed, so allow 4 standard errors each
        rng = np.random.default_rng(11)
        for i in range(20):
            m = _random_mixture(rng)
            x = sample_mixture(m, 10**6, seed=100 + i)
            se_mean = x.std() / math.sqrt(x.size)
            se_var = math.sqrt(np.mean((x - x.mean()) ** 4) - x.var() ** 2) / math.sqrt(x.size)
            assert abs(x.mean() - mixture_mean(m)) < 4 * se_mean
            assert abs(x.var() - mixture_variance(m)) < 4 * se_var

    def test_mixture_pdf_integrates_to_one(self):
        m = BetaMixture([5, 2], [2, 5], [0.3, 0.7])
        total, _ = integrate.quad(lambda t: float(mixture_pdf(m, t)), 0.0, 1.0)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_moment_match_single_component_is_identity(self):
        matched = moment_match(BetaMixture([7.0], [3.0], [1.0]))
        assert matched.alpha == pytest.approx(7.0)
        assert matched.beta == pytest.approx(3.0)

    def test_moment_match_preserves_moments(self):
        m = BetaMixture([20, 30], [10, 12], [0.4, 0.6])
        single = BetaMixture.single(moment_match(m))
        assert mixture_mean(single) == pytest.approx(mixture_mean(m))
        assert mixture_variance(single) == pytest.approx(mixture_variance(m))


class TestDiscretization:
    def test_uniform(self):
        np.testing.assert_allclose(discretize(BetaMixture([1], [1], [1.0]), 10).masses, 0.1)

    def test_matches_incomplete_beta_cdf(self):
        edges = np.linspace(0.0, 1.0, 101)
        oracle = np.diff(betainc(2.0, 2.0, edges))
        np.testing.assert_allclose(discretize(BetaMixture([2], [2], [1.0]), 100).masses, oracle, atol=1e-3)

    def test_symmetric_mixture_is_mirror_symmetric(self):
        masses = discretize(BetaMixture([5, 2], [2, 5], [0.5, 0.5]), 100).masses
        np.testing.assert_allclose(masses, masses[::-1], atol=1e-12, rtol=0)

    def test_swapping_shapes_reverses_bins(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            m = _random_mixture(rng)
            mirrored = BetaMixture(m.betas, m.alphas, m.weights)
            np.testing.assert_allclose(discretize(mirrored, 100).masses, discretize(m, 100).masses[::-1],
                                       atol=1e-12, rtol=0)

    def test_midpoint_grid_mirrors(self):
        x, log_x, log_1mx = midpoint_grid(100)
        np.testing.assert_array_equal(log_x, log_1mx[::-1])
        assert x[0] == 0.005 and x[-1] == 0.995

    def test_bin_edges(self):
        np.testing.assert_array_equal(bin_index([0.0, 0.5, 0.55, 0.999, 1.0], 100), [0, 50, 55, 99, 99])
        np.testing.assert_array_equal(bin_index([0.1, 0.2], 10), [1, 2])

    def test_bin_index_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            bin_index([1.01], 10)

    def test_histogram_from_samples(self):
        h = Histogram.from_samples([0.55] * 20, 100)
        assert h.masses[55] == 1.0
        assert h.n_bins == 100
        np.testing.assert_array_equal(h.reversed().masses[44], 1.0)
