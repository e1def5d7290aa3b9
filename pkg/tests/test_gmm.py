import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from src.models.mixture import GaussianMode, Gmm, ReductionConfig
from src.services import gmm as gmm_ops
from src.utils.errors import ConfigError, DomainError, StructuralError


def two_dim_mixture() -> Gmm:
    return Gmm(
        weights=[0.3, 0.7],
        means=[[0.0, 1.0], [2.0, -1.0]],
        covs=[[[1.0, 0.2], [0.2, 0.5]], [[0.3, 0.0], [0.0, 0.8]]],
    )


class TestGmmModel:

    def test_table_weights_renormalized(self, table_one):
        assert table_one.size == 6
        assert table_one.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_weights_far_from_one_rejected(self):
        doc = {"modes": [{"weight": 0.5, "mean": [0.0], "cov": [[1.0]]}, {"weight": 0.4, "mean": [1.0], "cov": [[1.0]]}]}
        with pytest.raises(ConfigError, match="weights sum"):
            Gmm.from_document(doc)

    def test_negative_weight_rejected(self):
        with pytest.raises(StructuralError):
            Gmm(weights=[1.2, -0.2], means=[[0.0], [1.0]], covs=[[[1.0]], [[1.0]]])

    def test_indefinite_covariance_rejected(self):
        with pytest.raises(StructuralError, match="positive semidefinite"):
            Gmm.gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_asymmetric_covariance_rejected(self):
        with pytest.raises(StructuralError, match="symmetric"):
            Gmm.gaussian([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])

    def test_dimension_mismatch_names_mode(self):
        doc = {"modes": [{"weight": 0.5, "mean": [0.0], "cov": [[1.0]]}, {"weight": 0.5, "mean": [0.0, 1.0], "cov": [[1.0]]}]}
        with pytest.raises(StructuralError) as exc:
            Gmm.from_document(doc)
        assert exc.value.field == "modes[1]"

    def test_document_round_trip(self):
        g = two_dim_mixture()
        again = Gmm.from_document(g.to_document(), normalize=False)
        np.testing.assert_array_equal(again.means, g.means)
        np.testing.assert_array_equal(again.covs, g.covs)

    def test_from_modes(self):
        g = Gmm.from_modes([GaussianMode(weight=0.25, mean=[1.0], cov=[[2.0]]), GaussianMode(weight=0.75, mean=[0.0], cov=[[1.0]])])
        assert g.size == 2
        assert g.mode(0).weight == 0.25


class TestClosedOperations:

    def test_affine_map_matches_direct_formula(self, table_one):
        Q = np.array([[-0.0375]])
        mapped = gmm_ops.affine_map(table_one, Q)
        np.testing.assert_allclose(mapped.means, table_one.means @ Q.T)
        np.testing.assert_allclose(mapped.covs[0], Q @ table_one.covs[0] @ Q.T)
        np.testing.assert_array_equal(mapped.weights, table_one.weights)

    def test_affine_map_changes_dimension(self):
        g = two_dim_mixture()
        mapped = gmm_ops.affine_map(g, [[1.0, 1.0]], shift=[3.0])
        assert mapped.dim == 1
        np.testing.assert_allclose(mapped.means[:, 0], g.means.sum(axis=1) + 3.0)

    def test_affine_map_shape_checked(self):
        with pytest.raises(StructuralError):
            gmm_ops.affine_map(two_dim_mixture(), np.eye(3))

    def test_independent_sum_is_cross_product(self):
        g = two_dim_mixture()
        total = gmm_ops.independent_sum(g, g)
        assert total.size == 4
        np.testing.assert_allclose(total.means[1], g.means[0] + g.means[1])
        assert total.weights[1] == pytest.approx(0.3 * 0.7)

    def test_independent_sum_adds_moments(self, table_one):
        total = gmm_ops.independent_sum(table_one, table_one)
        mean, cov = gmm_ops.moments(table_one)
        total_mean, total_cov = gmm_ops.moments(total)
        np.testing.assert_allclose(total_mean, 2 * mean, atol=1e-12)
        np.testing.assert_allclose(total_cov, 2 * cov, rtol=1e-12)

    def test_independent_sum_dimension_checked(self, table_one):
        with pytest.raises(StructuralError):
            gmm_ops.independent_sum(table_one, two_dim_mixture())

    def test_moments_of_table(self, table_one):
        mean, cov = gmm_ops.moments(table_one)
        w = table_one.weights
        mu = table_one.means[:, 0]
        expected_var = np.sum(w * (table_one.covs[:, 0, 0] + mu**2)) - np.sum(w * mu) ** 2
        assert mean[0] == pytest.approx(np.sum(w * mu))
        assert cov[0, 0] == pytest.approx(expected_var)

    def test_sample_mean_within_three_standard_errors(self, table_one):
        samples = gmm_ops.sample(table_one, 200_000, seed=7)
        mean, cov = gmm_ops.moments(table_one)
        se = np.sqrt(cov[0, 0] / samples.shape[0])
        assert abs(samples.mean() - mean[0]) < 3 * se

    def test_sampling_is_deterministic(self):
        g = two_dim_mixture()
        np.testing.assert_array_equal(gmm_ops.sample(g, 100, seed=1), gmm_ops.sample(g, 100, seed=1))


class TestDensities:

    def test_pdf_matches_direct_sum(self, table_one):
        x = 1.2318
        direct = sum(
            w * norm.pdf(x, loc=mu[0], scale=np.sqrt(K[0, 0]))
            for w, mu, K in zip(table_one.weights, table_one.means, table_one.covs)
        )
        assert gmm_ops.pdf(table_one, x) == pytest.approx(direct, rel=1e-12)

    def test_pdf_vectorized(self):
        g = two_dim_mixture()
        points = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, -1.0]])
        values = gmm_ops.pdf(g, points)
        assert values.shape == (3,)
        assert values[2] == pytest.approx(gmm_ops.pdf(g, points[2]))

    @pytest.mark.parametrize("narrow", [False, True])
    def test_pdf_integrates_to_one(self, table_one, narrow):
        g = table_one
        if narrow:
            g = Gmm(weights=[0.2, 0.5, 0.3], means=[[-2.0], [0.5], [3.0]], covs=[[[0.3]], [[1.0]], [[1e-4]]])
        mean, cov = gmm_ops.moments(g)
        spread = 10.0 * np.sqrt(cov[0, 0])
        total, _ = quad(
            lambda x: gmm_ops.pdf(g, x),
            mean[0] - spread,
            mean[0] + spread,
            points=sorted(g.means[:, 0]),
            limit=400,
            epsabs=1e-10,
        )
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_cdf_limits_and_monotonicity(self, table_one):
        grid = np.linspace(-30, 30, 301)
        values = gmm_ops.cdf_1d(table_one, grid)
        assert values[0] == pytest.approx(0.0, abs=1e-12)
        assert values[-1] == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(values) >= -1e-15)

    def test_cdf_of_point_mass_is_a_step(self):
        g = Gmm.point_mass(1)
        assert gmm_ops.cdf_1d(g, -1e-9) == 0.0
        assert gmm_ops.cdf_1d(g, 0.0) == 1.0

    def test_cdf_requires_one_dimension(self):
        with pytest.raises(DomainError):
            gmm_ops.cdf_1d(two_dim_mixture(), 0.0)


class TestReduction:

    def test_zero_thresholds_merge_exact_duplicates_only(self):
        g = Gmm(weights=[0.25, 0.25, 0.5], means=[[0.0], [0.0], [1e-9]], covs=[[[1.0]], [[1.0]], [[1.0]]])
        reduced = gmm_ops.reduce(g, ReductionConfig())
        assert reduced.size == 2
        assert sorted(reduced.weights.tolist()) == pytest.approx([0.5, 0.5])

    def test_moment_matching_preserves_overall_moments(self, table_one):
        total = gmm_ops.independent_sum(table_one, gmm_ops.affine_map(table_one, [[0.05]]))
        reduced = gmm_ops.reduce(total, ReductionConfig(d_mu=0.5, d_K=0.5))
        assert reduced.size < total.size
        before, after = gmm_ops.moments(total), gmm_ops.moments(reduced)
        np.testing.assert_allclose(after[0], before[0], atol=1e-12)
        np.testing.assert_allclose(after[1], before[1], rtol=1e-12)

    def test_literal_mode_keeps_representatives(self):
        g = Gmm(weights=[0.6, 0.4], means=[[0.0], [0.05]], covs=[[[1.0]], [[1.01]]])
        reduced = gmm_ops.reduce(g, ReductionConfig(d_mu=0.1, d_K=0.1, moment_match=False))
        assert reduced.size == 1
        np.testing.assert_array_equal(reduced.means, [[0.0]])
        np.testing.assert_array_equal(reduced.covs, [[[1.0]]])

    def test_result_independent_of_input_order(self, table_one):
        total = gmm_ops.independent_sum(table_one, gmm_ops.affine_map(table_one, [[0.1]]))
        perm = np.random.default_rng(0).permutation(total.size)
        shuffled = Gmm.trusted(total.weights[perm].copy(), total.means[perm].copy(), total.covs[perm].copy())
        cfg = ReductionConfig(d_mu=0.3, d_K=0.3)
        a, b = gmm_ops.reduce(total, cfg), gmm_ops.reduce(shuffled, cfg)
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-15)
        np.testing.assert_allclose(a.means, b.means, atol=1e-12)

    def test_auto_thresholds_follow_spread(self, table_one):
        cfg = gmm_ops.auto_reduction(table_one)
        _, cov = gmm_ops.moments(table_one)
        assert cfg.d_mu == pytest.approx(0.01 * np.sqrt(cov[0, 0]))
        assert cfg.d_K == pytest.approx(0.01 * cov[0, 0])

    def test_scaled_config(self):
        cfg = ReductionConfig(d_mu=0.0747, d_K=0.0917).scaled(0.1)
        assert cfg.d_mu == pytest.approx(0.00747)
        assert cfg.enabled
        assert not ReductionConfig().enabled


class TestEmFit:

    def test_single_mode_echoes_sample_moments(self):
        rng = np.random.default_rng(3)
        samples = rng.multivariate_normal([1.0, -2.0], [[2.0, 0.3], [0.3, 0.5]], size=2000)
        fitted, trace = gmm_ops.em_fit(samples, 1, seed=0)
        np.testing.assert_allclose(fitted.means[0], samples.mean(axis=0), atol=1e-8)
        np.testing.assert_allclose(fitted.covs[0], np.cov(samples.T, bias=True), atol=1e-6)
        assert len(trace) >= 1

    def test_recovers_table_likelihood(self, table_one):
        samples = gmm_ops.sample(table_one, 50_000, seed=12)
        fitted, trace = gmm_ops.em_fit(samples, 6, seed=0)
        assert fitted.size == 6
        assert gmm_ops.log_likelihood(fitted, samples) >= gmm_ops.log_likelihood(table_one, samples) - 0.01
        assert np.all(np.diff(trace) >= -1e-9)

    def test_too_few_samples(self):
        with pytest.raises(DomainError, match="samples"):
            gmm_ops.em_fit(np.zeros((20, 1)), 6, seed=0)
