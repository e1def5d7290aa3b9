"""
End-to-end agreement between the analytic false-alarm rate and simulation
"""

import math

import numpy as np
import pytest
from scipy.special import gammainc

from src.models.mixture import Gmm, ReductionConfig
from src.services import detector
from src.services.lti_core import lyapunov_residual_cov, settling_horizon
from src.services.mc_oracle import empirical_false_alarm
from src.services.residual_gmm import steady_state_residual
from tests.conftest import make_spd, make_stable_system


def bimodal_noise(rng: np.random.Generator, p: int, scale: float = 0.3) -> Gmm:
    direction = rng.standard_normal(p)
    direction *= 1.5 / np.linalg.norm(direction)
    cov = make_spd(rng, p, scale)
    return Gmm(weights=[0.4, 0.6], means=[-direction, 0.6 * direction], covs=[cov, cov])


class TestWorkedExample:

    def test_analytic_rate_matches_simulation(self, example_system, table_one, example_model):
        report = detector.false_alarm_rate(example_model, 0.75)
        assert 0.45 <= report.false_alarm <= 0.56

        det = detector.detector_for(example_model, 0.75)
        summary = empirical_false_alarm(
            example_system, table_one, None, det, 200_000, burn_in=50, seed=1, batches=4, reference=example_model.mixture
        )
        assert abs(report.false_alarm - summary.alarm_rate) <= 0.01
        assert summary.ks_distance < 0.02

    def test_tuned_threshold_reproduces_target(self, example_model):
        alpha, report = detector.tune_threshold(example_model, 0.478)
        assert abs(report.false_alarm - 0.478) <= 1e-4
        assert abs(detector.false_alarm_rate(example_model, alpha).false_alarm - 0.478) <= 1e-4

    def test_bank_identity(self, example_model):
        report = detector.false_alarm_rate(example_model, 0.75)
        assert len(report.per_mode_alphas) == example_model.mode_count
        assert abs(np.dot(report.mode_weights, report.per_mode_rates) - report.false_alarm) <= 1e-12


class TestGaussianBaseline:

    @pytest.mark.parametrize("case", range(20))
    def test_chi_squared_rate_and_lyapunov_covariance(self, case):
        rng = np.random.default_rng(1000 + case)
        p = 1 + case % 3
        n = p + 1 + case % 2
        system = make_stable_system(rng, n, p)
        R1, R2 = make_spd(rng, n, 0.2), make_spd(rng, p)

        model = steady_state_residual(
            system, Gmm.gaussian(np.zeros(p), R2), Gmm.gaussian(np.zeros(n), R1), tail_tol=1e-9
        )
        _, Sigma = lyapunov_residual_cov(system, R1, R2)
        assert np.linalg.norm(model.overall_cov - Sigma) <= 1e-6 * np.linalg.norm(Sigma)

        for alpha in (0.2, 1.0, 2.5, 6.0, 12.0):
            rate = detector.false_alarm_rate(model, alpha).false_alarm
            assert abs(rate - (1 - gammainc(p / 2, alpha / 2))) <= 1e-6


@pytest.mark.slow
class TestMixtureBattery:
    """Randomized systems and bimodal measurement noise, analytic rate against 10^6 simulated steps"""

    CASES = 30
    SAMPLES = 1_000_000

    @staticmethod
    def build_case(case: int):
        rng = np.random.default_rng(700 + case)
        p = 1 + case % 2
        # every third case has modes much narrower than the residual spread
        scale = 0.005 if case % 3 == 0 else 0.3
        system = make_stable_system(rng, p + 1, p, norm=0.3)
        noise_eta = bimodal_noise(rng, p, scale)
        k_star = settling_horizon(system, 1e-5)
        model = steady_state_residual(system, noise_eta, reduction=ReductionConfig(d_mu=1e-3, d_K=1e-3), k_star=k_star)
        rate = float(rng.uniform(0.02, 0.3))
        return system, noise_eta, model, k_star, detector.gaussian_threshold(p, rate)

    def test_quadrature_agrees_with_simulation(self):
        failures = []
        for case in range(self.CASES):
            system, noise_eta, model, k_star, alpha = self.build_case(case)
            report = detector.false_alarm_rate(model, alpha)
            assert not report.unconverged_modes

            summary = empirical_false_alarm(
                system,
                noise_eta,
                None,
                detector.detector_for(model, alpha),
                self.SAMPLES,
                burn_in=5 * k_star,
                seed=case,
                batches=4,
            )
            se = math.sqrt(report.false_alarm * (1 - report.false_alarm) / self.SAMPLES)
            if abs(report.false_alarm - summary.alarm_rate) > 3 * se:
                failures.append((case, report.false_alarm, summary.alarm_rate))
        assert len(failures) <= 2, failures
