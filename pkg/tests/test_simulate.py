"""Tests for truth generation and the two sampling pipelines.

Distributional claims (label frequencies, masking rates, ratio calibration)
are checked against binomial/multinomial standard errors at fixed seeds, so
the suite stays deterministic.
"""

import numpy as np
import pytest

from pulogit.core_math import CaseControlRatios, SingleTrainingProbs
from pulogit.errors import InvalidConfig
from pulogit.models import mn_predict_proba
from pulogit.simulate import (
    SimConfig,
    case_control_sample,
    gen_covariates,
    gen_mn_truth,
    gen_on_truth,
    sample_labels,
    single_training_mask,
    single_training_sample,
)


class TestSimConfig:
    def test_validation(self):
        with pytest.raises(InvalidConfig):
            SimConfig(n=10, p=2, K=1, s=3)  # more active groups than covariates
        with pytest.raises(InvalidConfig):
            SimConfig(n=10, p=2, K=1, s=1, nonzero_range=(0.0, 1.0))
        with pytest.raises(InvalidConfig):
            SimConfig(n=10, p=2, K=2, s=1, pi_st=(0.5,))
        with pytest.raises(InvalidConfig):
            SimConfig(n=10, p=2, K=1, s=1, n_unlabeled=3, n_labeled=(3,))
        with pytest.raises(InvalidConfig):
            SimConfig(n=10, p=2, K=1, s=1, intercept_target=1.5)

    def test_default_counts_absorb_rounding(self):
        """Default labeled counts are n // (2K); unlabeled picks up the rest."""
        cfg = SimConfig(n=150, p=2, K=2, s=1)
        assert cfg.n_labeled == (37, 37)
        assert cfg.n_unlabeled == 76


class TestTruthGeneration:
    def test_mn_support_and_amplitudes(self):
        cfg = SimConfig(n=20, p=30, K=3, s=4, seed=80, nonzero_range=(0.5, 1.0))
        truth = gen_mn_truth(cfg)
        active = np.flatnonzero(np.any(truth.Theta != 0, axis=1))
        assert active.size == 4
        mags = np.abs(truth.Theta[active])
        assert np.all((mags >= 0.5) & (mags <= 1.0))

    def test_on_support_and_amplitudes(self):
        cfg = SimConfig(n=20, p=30, K=2, s=5, seed=81)
        truth = gen_on_truth(cfg)
        assert np.count_nonzero(truth.beta) == 5
        mags = np.abs(truth.beta[truth.beta != 0])
        assert np.all((mags >= 0.5) & (mags <= 1.0))

    def test_balanced_mn_intercepts_are_zero(self):
        """Equal class odds at x = 0 means exactly zero intercepts."""
        truth = gen_mn_truth(SimConfig(n=20, p=5, K=3, s=2, seed=82))
        np.testing.assert_array_equal(truth.b, np.zeros(3))

    def test_balanced_on_cutpoints(self):
        """For K=2 the balanced cut-points are (-log 2, log 2)."""
        truth = gen_on_truth(SimConfig(n=20, p=5, K=2, s=2, seed=83))
        np.testing.assert_allclose(truth.nu, [-np.log(2.0), np.log(2.0)], atol=1e-12)

    def test_scalar_prevalence_target_hits_intercept_only_model(self):
        cfg = SimConfig(n=20, p=5, K=2, s=2, seed=84, intercept_target=0.7)
        truth = gen_mn_truth(cfg)
        e = np.exp(truth.b).sum()
        assert e / (1.0 + e) == pytest.approx(0.7, abs=1e-12)

    def test_truth_deterministic_and_seed_sensitive(self):
        cfg = SimConfig(n=20, p=10, K=2, s=3, seed=85)
        a, b = gen_mn_truth(cfg), gen_mn_truth(cfg)
        np.testing.assert_array_equal(a.Theta, b.Theta)
        other = gen_mn_truth(SimConfig(n=20, p=10, K=2, s=3, seed=86))
        assert np.any(other.Theta != a.Theta)


class TestSampleLabels:
    def test_frequencies_match_probabilities(self):
        """Empirical class frequencies within 4 sigma of the model's
        probabilities at a fixed covariate row."""
        rng = np.random.default_rng(87)
        truth = gen_mn_truth(SimConfig(n=10, p=3, K=2, s=2, seed=88))
        x = np.array([0.3, -0.5, 1.0])
        proba = mn_predict_proba(truth, x)
        n = 20000
        y = sample_labels(truth, np.tile(x, (n, 1)), rng)
        freq = np.bincount(y, minlength=3) / n
        sigma = np.sqrt(proba * (1 - proba) / n)
        assert np.all(np.abs(freq - proba) < 4 * sigma)

    def test_deterministic_given_integer_seed(self):
        truth = gen_on_truth(SimConfig(n=10, p=3, K=2, s=1, seed=89))
        X = gen_covariates(SimConfig(n=50, p=3, K=2, s=1, seed=90))
        np.testing.assert_array_equal(sample_labels(truth, X, 7), sample_labels(truth, X, 7))


class TestCaseControlSampling:
    def test_counts_and_label_consistency(self):
        cfg = SimConfig(n=120, p=4, K=2, s=2, seed=91)
        truth = gen_mn_truth(cfg)
        data = case_control_sample(truth, cfg)
        assert data.n == 120
        np.testing.assert_array_equal(data.label_counts, [60, 30, 30])
        assert isinstance(data.scenario, CaseControlRatios)
        # labeled rows carry their true class; unlabeled rows keep y hidden
        labeled = data.z > 0
        np.testing.assert_array_equal(data.y[labeled], data.z[labeled])
        assert np.any(data.y[~labeled] != 0)

    def test_pipeline_deterministic(self):
        cfg = SimConfig(n=80, p=3, K=2, s=1, seed=92)
        truth = gen_mn_truth(cfg)
        a, b = case_control_sample(truth, cfg), case_control_sample(truth, cfg)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.z, b.z)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.scenario.kappa, b.scenario.kappa)

    def test_ratios_match_independent_prevalence_estimate(self):
        """kappa_k = n_k / (pi_k n_u) with pi_k the true per-class prevalence;
        an independent million-draw estimate agrees within 2% relative."""
        cfg = SimConfig(n=200, p=4, K=2, s=2, seed=93)
        truth = gen_mn_truth(cfg)
        data = case_control_sample(truth, cfg)
        rng = np.random.default_rng(94)
        n_mc = 1_000_000
        X = rng.normal(0.0, cfg.covariate_sd, size=(n_mc, cfg.p))
        y = sample_labels(truth, X, rng)
        pi_mc = np.bincount(y, minlength=3)[1:] / n_mc
        kappa_mc = np.array(cfg.n_labeled) / (pi_mc * cfg.n_unlabeled)
        rel = np.abs(data.scenario.kappa - kappa_mc) / kappa_mc
        assert np.all(rel <= 0.02)


class TestSingleTrainingSampling:
    def test_mask_keeps_labels_at_the_configured_rate(self):
        """Per-class keep frequencies within 3 binomial sigma of pi_st."""
        rng = np.random.default_rng(95)
        y = np.repeat([1, 2], 5000)
        probs = SingleTrainingProbs(np.array([0.3, 0.7]))
        z = single_training_mask(y, probs, rng)
        assert set(np.unique(z)) <= {0, 1, 2}
        for k, pi in ((1, 0.3), (2, 0.7)):
            kept = np.mean(z[y == k] == k)
            sigma = np.sqrt(pi * (1 - pi) / 5000)
            assert abs(kept - pi) < 3 * sigma
        # a masked row never flips class
        assert np.all((z == y) | (z == 0))

    def test_sample_composition(self):
        cfg = SimConfig(n=300, p=3, K=2, s=1, seed=96, pi_st=(0.4, 0.6))
        truth = gen_mn_truth(cfg)
        data = single_training_sample(truth, cfg)
        assert data.n == 300
        assert isinstance(data.scenario, SingleTrainingProbs)
        np.testing.assert_allclose(data.scenario.pi_st, [0.4, 0.6])
        labeled = data.z > 0
        np.testing.assert_array_equal(data.z[labeled], data.y[labeled])
        # class-0 rows can never be labeled
        assert not np.any(data.z[data.y == 0] > 0)

    def test_pipeline_deterministic(self):
        cfg = SimConfig(n=100, p=3, K=2, s=1, seed=97, pi_st=(0.5, 0.5))
        truth = gen_mn_truth(cfg)
        a, b = single_training_sample(truth, cfg), single_training_sample(truth, cfg)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.z, b.z)
