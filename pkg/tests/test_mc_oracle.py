import math

import numpy as np
import pytest
from unittest.mock import patch

from src.config import settings
from src.models.detector import ChiSquaredDetector
from src.models.mixture import Gmm
from src.models.response import EmpiricalSummary
from src.models.system import LtiSystem
from src.services import gmm as gmm_ops
from src.services import detector
from src.services.detector import gaussian_threshold
from src.services.lti_core import lyapunov_residual_cov, simulate
from src.services.mc_oracle import (
    ResidualFilter,
    batch_sizes,
    empirical_false_alarm,
    histogram_rows,
    ks_1d,
    ks_from_histogram,
    merge_summaries,
    residual_stream,
)
from src.utils.errors import DomainError, StructuralError


def nearly_white_system() -> LtiSystem:
    # F - LC = 0.2
    return LtiSystem(F=[[0.7]], G=[[0.0]], C=[[1.0]], L=[[0.5]])


def gaussian_setup(rate: float = 0.05):
    system = nearly_white_system()
    noise_v = Gmm.gaussian([0.0], [[0.1]])
    noise_eta = Gmm.gaussian([0.0], [[1.0]])
    _, Sigma = lyapunov_residual_cov(system, noise_v.covs[0], noise_eta.covs[0])
    det = ChiSquaredDetector.build([0.0], Sigma, gaussian_threshold(1, rate))
    return system, noise_eta, noise_v, det


def summary_of(data: np.ndarray, alpha: float = 1.0) -> EmpiricalSummary:
    mean = data.mean(axis=0)
    centered = data - mean
    return EmpiricalSummary(
        sample_count=data.shape[0],
        alarm_count=0,
        alarm_rate=0.0,
        alpha=alpha,
        empirical_mean=mean.tolist(),
        empirical_cov=(centered.T @ centered / data.shape[0]).tolist(),
    )


class TestResidualFilter:

    def test_matches_simulated_residuals(self, stable_system_factory, spd_factory):
        rng = np.random.default_rng(6)
        system = stable_system_factory(rng, n=3, p=2)
        noise_v = Gmm.gaussian(np.zeros(3), spd_factory(rng, 3, 0.2))
        noise_eta = Gmm.gaussian([0.5, -0.2], spd_factory(rng, 2))
        trace = simulate(system, noise_v, noise_eta, None, 300, seed=4)

        eta = trace.outputs - trace.states @ system.C.T
        v = trace.states[1:] - trace.states[:-1] @ system.F.T
        w = np.hstack([v, eta[:-1]])
        np.testing.assert_allclose(ResidualFilter(system)(w), trace.residuals[:-1], atol=1e-10)

    def test_matches_recursion_with_clustered_poles(self, spd_factory):
        rng = np.random.default_rng(10)
        n, p = 10, 2
        V = np.eye(n) + 0.3 * rng.standard_normal((n, n))
        M = V @ np.diag(np.linspace(0.85, 0.95, n)) @ np.linalg.inv(V)
        C = rng.standard_normal((p, n))
        L = 0.3 * rng.standard_normal((n, p))
        system = LtiSystem(F=M + L @ C, G=np.zeros((n, 1)), C=C, L=L)
        noise_v = Gmm.gaussian(np.zeros(n), spd_factory(rng, n, 0.2))
        noise_eta = Gmm.gaussian(np.zeros(p), spd_factory(rng, p))
        trace = simulate(system, noise_v, noise_eta, None, 2000, seed=1)

        eta = trace.outputs - trace.states @ C.T
        v = trace.states[1:] - trace.states[:-1] @ system.F.T
        w = np.hstack([v, eta[:-1]])
        filt = ResidualFilter(system)
        filtered = np.vstack([filt(w[:700]), filt(w[700:])])
        scale = np.abs(trace.residuals).max()
        np.testing.assert_allclose(filtered, trace.residuals[:-1], atol=1e-9 * scale)

    def test_state_carries_across_chunks(self, example_system):
        w = np.random.default_rng(0).standard_normal((500, 3))
        whole = ResidualFilter(example_system)(w)
        filt = ResidualFilter(example_system)
        pieces = np.vstack([filt(w[:137]), filt(w[137:])])
        np.testing.assert_allclose(pieces, whole, atol=1e-12)


class TestEmpiricalFalseAlarm:

    def test_zero_noise_never_alarms(self, example_system):
        det = ChiSquaredDetector.build([0.0], [[1.0]], 0.5)
        summary = empirical_false_alarm(example_system, Gmm.point_mass(1), None, det, 5000, burn_in=10, seed=0)
        assert summary.alarm_count == 0
        assert summary.sample_count == 5000
        assert sum(summary.histogram) == 5000

    def test_gaussian_rate_within_standard_errors(self):
        system, noise_eta, noise_v, det = gaussian_setup(0.05)
        summary = empirical_false_alarm(system, noise_eta, noise_v, det, 200_000, burn_in=100, seed=3)
        se = math.sqrt(0.05 * 0.95 / summary.sample_count)
        assert abs(summary.alarm_rate - 0.05) < 4 * se
        assert summary.empirical_cov[0][0] == pytest.approx(det.cov[0, 0], rel=0.02)

    def test_same_seed_same_summary(self, example_system, table_one):
        det = ChiSquaredDetector.build([0.0], [[0.05]], 0.75)
        a = empirical_false_alarm(example_system, table_one, None, det, 20_000, burn_in=50, seed=11, batches=3)
        b = empirical_false_alarm(example_system, table_one, None, det, 20_000, burn_in=50, seed=11, batches=3)
        c = empirical_false_alarm(example_system, table_one, None, det, 20_000, burn_in=50, seed=12, batches=3)
        assert a == b
        assert a.alarm_count != c.alarm_count or a.empirical_mean != c.empirical_mean

    def test_thread_count_does_not_change_result(self, example_system, table_one):
        det = ChiSquaredDetector.build([0.0], [[0.05]], 0.75)
        serial = empirical_false_alarm(example_system, table_one, None, det, 30_000, burn_in=50, seed=2, batches=4)
        with patch.object(settings, "workers", 3):
            threaded = empirical_false_alarm(example_system, table_one, None, det, 30_000, burn_in=50, seed=2, batches=4)
        assert threaded.alarm_count == serial.alarm_count
        assert threaded.histogram == serial.histogram
        np.testing.assert_allclose(threaded.empirical_cov, serial.empirical_cov, rtol=1e-12)

    @pytest.mark.parametrize("batches", [4, 7])
    def test_batch_partition_does_not_change_counts(self, example_system, table_one, batches):
        det = ChiSquaredDetector.build([0.0], [[0.05]], 0.75)
        with patch.object(settings, "mc_block_size", 5000):
            whole = empirical_false_alarm(example_system, table_one, None, det, 40_000, burn_in=100, seed=2)
            split = empirical_false_alarm(
                example_system, table_one, None, det, 40_000, burn_in=100, seed=2, batches=batches
            )
        assert split.alarm_count == whole.alarm_count
        assert split.histogram == whole.histogram
        np.testing.assert_allclose(split.empirical_mean, whole.empirical_mean, rtol=1e-9, atol=1e-14)
        np.testing.assert_allclose(split.empirical_cov, whole.empirical_cov, rtol=1e-9)

    def test_first_batch_is_prefix_of_one_trajectory(self, example_system, table_one):
        det = ChiSquaredDetector.build([0.0], [[0.05]], 0.75)
        with patch.object(settings, "mc_block_size", 3000):
            prefix = empirical_false_alarm(example_system, table_one, None, det, 10_000, burn_in=20, seed=4)
            longer = residual_stream(example_system, table_one, Gmm.point_mass(2), 4, 0, 10_020)
            residuals = np.vstack(list(longer))[20:]
        alarms = detector.distance_measure(det, residuals) > det.threshold
        assert prefix.alarm_count == int(alarms.sum())

    def test_histogram_clamps_outliers(self, example_system, table_one):
        # narrow detector covariance pushes most samples outside the edges
        det = ChiSquaredDetector.build([0.0], [[1e-6]], 0.75)
        summary = empirical_false_alarm(example_system, table_one, None, det, 4000, burn_in=10, seed=1)
        assert sum(summary.histogram) == 4000
        assert summary.histogram[0] > 0 and summary.histogram[-1] > 0
        rows = histogram_rows(summary)
        assert len(rows) == settings.histogram_bins
        assert rows[0][1] == rows[1][0]

    def test_reference_gives_ks_distance(self, example_system, table_one, example_model):
        det = ChiSquaredDetector.build(example_model.overall_mean, example_model.overall_cov, 0.75)
        summary = empirical_false_alarm(
            example_system, table_one, None, det, 20_000, burn_in=50, seed=5, reference=example_model.mixture
        )
        assert summary.ks_distance is not None
        assert summary.ks_distance < 0.05

    def test_invalid_arguments(self, example_system, table_one):
        det = ChiSquaredDetector.build([0.0], [[1.0]], 1.0)
        with pytest.raises(DomainError):
            empirical_false_alarm(example_system, table_one, None, det, 0, burn_in=0, seed=0)
        with pytest.raises(DomainError):
            empirical_false_alarm(example_system, table_one, None, det, 10, burn_in=-1, seed=0)
        wide = ChiSquaredDetector.build([0.0, 0.0], np.eye(2), 1.0)
        with pytest.raises(StructuralError):
            empirical_false_alarm(example_system, table_one, None, wide, 10, burn_in=0, seed=0)
        with pytest.raises(StructuralError) as exc:
            empirical_false_alarm(example_system, table_one, Gmm.point_mass(3), det, 10, burn_in=0, seed=0)
        assert exc.value.field == "noise_v"
        with pytest.raises(DomainError, match="1-D"):
            empirical_false_alarm(
                example_system, table_one, None, det, 10, burn_in=0, seed=0, reference=Gmm.gaussian([0.0, 0.0], np.eye(2))
            )


class TestMergeSummaries:

    def test_merge_is_exact(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((300, 2)), 2.0 + rng.standard_normal((500, 2))
        merged = merge_summaries(summary_of(a), summary_of(b))
        both = np.vstack([a, b])
        assert merged.sample_count == 800
        np.testing.assert_allclose(merged.empirical_mean, both.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(merged.empirical_cov, np.cov(both.T, bias=True), atol=1e-12)

    def test_different_thresholds_rejected(self):
        data = np.zeros((4, 1))
        with pytest.raises(DomainError):
            merge_summaries(summary_of(data, 1.0), summary_of(data, 2.0))

    def test_batch_sizes_cover_total(self):
        assert batch_sizes(10, 4) == [3, 3, 2, 2]
        assert sum(batch_sizes(1_000_001, 7)) == 1_000_001


class TestKolmogorovSmirnov:

    def test_samples_from_model_are_close(self, table_one):
        samples = gmm_ops.sample(table_one, 20_000, seed=9)
        assert ks_1d(samples, table_one) < 0.02

    def test_binned_statistic_brackets_exact_one(self, table_one):
        samples = gmm_ops.sample(table_one, 20_000, seed=9).ravel()
        mean, cov = gmm_ops.moments(table_one)
        sd = math.sqrt(cov[0, 0])
        edges = np.linspace(mean[0] - 8 * sd, mean[0] + 8 * sd, 4097)
        counts = np.bincount(np.searchsorted(edges, samples, side="right"), minlength=len(edges) + 1)

        binned = ks_from_histogram(counts, edges, table_one)
        exact = ks_1d(samples, table_one)
        cdf = gmm_ops.cdf_1d(table_one, edges)
        slack = max(np.diff(cdf).max(), cdf[0], 1.0 - cdf[-1])
        assert binned <= exact + 1e-12
        assert exact <= binned + slack + 1e-12

    def test_far_point_mass(self, table_one):
        assert ks_1d(np.full(100, 1e3), table_one) == pytest.approx(1.0, abs=1e-9)

    def test_requires_samples_and_one_dimension(self, table_one):
        with pytest.raises(DomainError):
            ks_1d([], table_one)
        with pytest.raises(DomainError):
            ks_1d([0.0], Gmm.gaussian([0.0, 0.0], np.eye(2)))
