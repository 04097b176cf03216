import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from services.model_kind import ModelKind
from services.moments import ProcessingPoint
from services.synthetic import (
    FIXED2D_LOADING, FIXED2D_NOISE, SourceLaw, SyntheticInstance, dirichlet_loadings,
    gen_continuous_instance, gen_discrete_instance, population_cross_covariance, population_s12,
    sample_continuous, sample_discrete,
)
from utils.errors import ConfigError, ScaleError


class TestInstances:
    def test_fixed2d_matrices(self, fixed2d_instance):
        assert_array_equal(fixed2d_instance.D1, FIXED2D_LOADING)
        assert_array_equal(fixed2d_instance.F2, FIXED2D_NOISE)
        assert fixed2d_instance.b == pytest.approx(0.1 / 100.0)
        assert fixed2d_instance.K == 1 and fixed2d_instance.K1 == 2

    def test_fixed2d_shape_is_enforced(self):
        with pytest.raises(ConfigError):
            gen_discrete_instance(3, 2, 1, 2, 2, 0.1, 0.1, 0.1, 100.0, 100.0, mode="fixed2d")

    def test_dirichlet_columns_on_simplex(self, discrete_instance):
        for D in (discrete_instance.D1, discrete_instance.D2, discrete_instance.F1):
            assert np.all(D >= 0)
            assert_allclose(D.sum(axis=0), 1.0)

    def test_rates_follow_expected_lengths(self, discrete_instance):
        inst = discrete_instance
        assert inst.b == pytest.approx(inst.K * inst.c / inst.Ls)
        assert inst.b1 == pytest.approx(inst.K1 * inst.c1 / inst.Ln)

    def test_continuous_columns_l1_normalized(self, continuous_instance):
        assert_allclose(np.abs(continuous_instance.D1).sum(axis=0), 1.0)
        assert continuous_instance.source_law().kind == "symmetric_gamma"

    def test_seeded_generation_is_deterministic(self):
        first = gen_discrete_instance(5, 5, 2, 2, 2, 0.3, 0.1, 0.1, 50.0, 50.0, seed=3)
        second = gen_discrete_instance(5, 5, 2, 2, 2, 0.3, 0.1, 0.1, 50.0, 50.0, seed=3)
        assert_array_equal(first.D1, second.D1)
        assert_array_equal(first.F2, second.F2)

    def test_invalid_parameters(self):
        with pytest.raises(ConfigError):
            gen_discrete_instance(5, 5, 0, 2, 2, 0.3, 0.1, 0.1, 50.0, 50.0)
        with pytest.raises(ConfigError):
            gen_continuous_instance(5, 5, 2, 2, 2, -0.3, 0.1, 0.1, 50.0, 50.0)

    def test_dict_round_trip(self, continuous_instance):
        restored = SyntheticInstance.from_dict(continuous_instance.to_dict())
        assert restored.kind == "continuous"
        assert_array_equal(restored.D2, continuous_instance.D2)
        assert restored.b1 == continuous_instance.b1


class TestSampling:
    def test_discrete_counts(self, discrete_instance):
        sample = sample_discrete(discrete_instance, 200, seed=0)
        assert sample.X1.discrete and sample.X1.data.shape == (6, 200)
        assert np.all(sample.X2.data == np.round(sample.X2.data))
        assert sample.alpha.shape == (2, 200)

    def test_same_seed_same_sample(self, discrete_instance):
        first = sample_discrete(discrete_instance, 50, seed=9)
        second = sample_discrete(discrete_instance, 50, seed=9)
        assert_array_equal(first.X1.data, second.X1.data)

    def test_continuous_sample_is_linear(self, continuous_instance):
        sample = sample_continuous(continuous_instance, 100, seed=1)
        inst = continuous_instance
        assert_allclose(sample.X1.data, inst.D1 @ sample.alpha + inst.F1 @ sample.beta1)
        assert not sample.X2.discrete

    def test_lengths_match_calibration(self, discrete_instance):
        inst = discrete_instance
        N = 100_000
        sample = sample_discrete(inst, N, seed=12)
        checks = [
            (sample.X1.data.sum(axis=0), inst.Ls + inst.Ln),
            ((inst.D1 @ sample.alpha).sum(axis=0), inst.Ls),
            ((inst.F2 @ sample.beta2).sum(axis=0), inst.Ln),
        ]
        for lengths, expected in checks:
            standard_error = lengths.std(ddof=1) / np.sqrt(N)
            assert abs(lengths.mean() - expected) < 3 * standard_error

    def test_source_means(self, discrete_instance):
        inst = discrete_instance
        alpha = sample_discrete(inst, 100_000, seed=13).alpha
        standard_error = alpha.std(axis=1, ddof=1) / np.sqrt(alpha.shape[1])
        assert np.all(np.abs(alpha.mean(axis=1) - inst.c / inst.b) < 3 * standard_error)
        assert np.all(alpha >= 0)

    def test_continuous_sources_are_centered(self, continuous_instance):
        alpha = sample_continuous(continuous_instance, 100_000, seed=14).alpha
        standard_error = alpha.std(axis=1, ddof=1) / np.sqrt(alpha.shape[1])
        assert np.all(np.abs(alpha.mean(axis=1)) < 3 * standard_error)

    def test_continuous_cross_covariance(self):
        inst = gen_continuous_instance(M1=6, M2=6, K=2, K1=2, K2=2, c=1.0, c1=1.0, c2=1.0,
                                       Ls=100.0, Ln=100.0, seed=3)
        sample = sample_continuous(inst, 100_000, seed=15)
        empirical = np.cov(sample.X1.data, sample.X2.data)[:6, 6:]
        expected = population_s12(inst)
        assert_allclose(inst.source_law().variance(), inst.c * (inst.c + 1) / inst.b ** 2)
        assert np.linalg.norm(empirical - expected) < 0.05 * np.linalg.norm(expected)

    def test_mean_matches_model(self, discrete_instance):
        sample = sample_discrete(discrete_instance, 20000, seed=4)
        inst = discrete_instance
        expected = inst.D1.sum(axis=1) * inst.c / inst.b + inst.F1 @ np.full(inst.K1, inst.c1 / inst.b1)
        assert_allclose(sample.X1.mean(), expected, rtol=0.1, atol=0.05)


class TestSourceLaw:
    def test_gamma_generalized_covariance(self):
        law = SourceLaw("gamma", np.array([2.0]), np.array([4.0]))
        assert_allclose(law.variance(), [2.0 / 16.0])
        assert_allclose(law.gen_covariance(np.array([1.0])), [2.0 / 9.0])
        with pytest.raises(ScaleError):
            law.gen_covariance(np.array([4.0]))

    def test_symmetric_gamma_matches_numeric_second_derivative(self):
        law = SourceLaw("symmetric_gamma", np.array([0.7]), np.array([3.0]))

        def cgf(h):
            b, c = 3.0, 0.7
            return np.log(0.5 * ((1 - h / b) ** -c + (1 + h / b) ** -c))

        h, step = 0.4, 1e-4
        numeric = (cgf(h + step) - 2 * cgf(h) + cgf(h - step)) / step ** 2
        assert law.gen_covariance(np.array([h]))[0] == pytest.approx(numeric, rel=1e-5)
        assert law.variance()[0] == pytest.approx(0.7 * 1.7 / 9.0)

    def test_gaussian_is_constant(self):
        law = SourceLaw.gaussian(np.array([1.5, 2.0]))
        assert_allclose(law.gen_covariance(np.array([0.3, -0.2])), [1.5, 2.0])


class TestPopulationMoments:
    def test_zero_point_is_cross_covariance(self, discrete_instance):
        zero = ProcessingPoint.zero(6, 5)
        assert_allclose(population_cross_covariance(discrete_instance, zero, ModelKind.DCCA),
                        population_s12(discrete_instance))

    def test_population_s12_matches_large_sample(self, discrete_instance):
        sample = sample_discrete(discrete_instance, 50000, seed=5)
        empirical = np.cov(sample.X1.data, sample.X2.data)[:6, 6:]
        expected = population_s12(discrete_instance)
        assert np.linalg.norm(empirical - expected) < 0.1 * np.linalg.norm(expected)

    def test_mixed_model_scales_count_view_only(self, discrete_instance):
        t = ProcessingPoint(np.full(6, 0.001), np.full(5, 0.002), "t")
        mixed = population_cross_covariance(discrete_instance, t, ModelKind.MCCA)
        law = discrete_instance.source_law()
        h = discrete_instance.D1.T @ t.t1 + discrete_instance.D2.T @ np.expm1(t.t2)
        expected = (discrete_instance.D1 * law.gen_covariance(h)) @ discrete_instance.D2.T * np.exp(t.t2)
        assert_allclose(mixed, expected)

    def test_dirichlet_loadings_shape(self, rng):
        D = dirichlet_loadings(7, 3, rng)
        assert D.shape == (7, 3)
        assert_allclose(D.sum(axis=0), 1.0)
