"""
Orchestration shared by the CLI commands: load a job, propagate the noise to
the residual, evaluate or tune the threshold and optionally validate it by
Monte-Carlo simulation
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.config import settings
from src.models.mixture import Gmm, ReductionConfig
from src.models.request import JobConfig, NoiseSource
from src.models.residual import ResidualModel
from src.models.response import EmpiricalSummary, RunReport, TuningReport
from src.models.system import LtiSystem
from src.services import detector, mc_oracle
from src.services import gmm as gmm_ops
from src.services.lti_core import require_stable, settling_horizon, simulate
from src.services.residual_gmm import residual_gmm_iterative, steady_state_residual
from src.utils.errors import ConfigError
from src.utils.io import read_csv_matrix, read_json
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class LoadedJob:
    config: JobConfig
    system: LtiSystem
    noise_eta: Gmm
    noise_v: Gmm | None


def load_noise(source: NoiseSource) -> Gmm:
    if source.gmm is not None:
        return Gmm.from_document(read_json(source.gmm))
    samples = read_csv_matrix(source.samples)
    fitted, _ = gmm_ops.em_fit(samples, source.mode_count, source.seed)
    return fitted


def load_job(config: JobConfig) -> LoadedJob:
    system = LtiSystem.from_document(read_json(config.system))
    noise_v = load_noise(config.noise_v) if config.noise_v is not None else None
    job = LoadedJob(config=config, system=system, noise_eta=load_noise(config.noise_eta), noise_v=noise_v)
    require_stable(system)
    logger.info("Job loaded", n=system.n, p=system.p, eta_modes=job.noise_eta.size)
    return job


def resolve_reduction(job: LoadedJob, k_star: int) -> ReductionConfig:
    """
    Explicit thresholds, none, or "auto": one percent of the spread of the
    residual obtained by propagating moment-matched Gaussian noises
    """
    setting = job.config.reduction
    if setting is None:
        return ReductionConfig()
    if setting != "auto":
        return ReductionConfig(d_mu=setting.d_mu, d_K=setting.d_K, moment_match=setting.moment_match)

    noise_v = Gmm.point_mass(job.system.n) if job.noise_v is None else job.noise_v
    spread = residual_gmm_iterative(
        job.system, _moment_matched(job.noise_eta), _moment_matched(noise_v), k_star, ReductionConfig()
    )
    cfg = gmm_ops.auto_reduction(spread)
    logger.info("Auto reduction thresholds", d_mu=cfg.d_mu, d_K=cfg.d_K)
    return cfg


def _moment_matched(g: Gmm) -> Gmm:
    return Gmm.gaussian(*gmm_ops.moments(g))


def build_residual(job: LoadedJob) -> ResidualModel:
    config = job.config
    k_star = config.k_star or settling_horizon(job.system, config.tail_tol)
    return steady_state_residual(
        job.system,
        job.noise_eta,
        job.noise_v,
        reduction=resolve_reduction(job, k_star),
        k_star=k_star,
    )


def cdf_rows(model: ResidualModel, points: int) -> List[Tuple[float, float]]:
    return detector.cdf_curve(model, detector.default_alpha_grid(model, points))


def monte_carlo(job: LoadedJob, model: ResidualModel, alpha: float) -> EmpiricalSummary:
    mc = job.config.mc
    if mc is None:
        raise ConfigError("mc: Monte-Carlo settings are required for validation")
    burn_in = mc.burn_in if mc.burn_in is not None else settings.mc_burn_in_factor * model.k_star
    det = detector.detector_for(model, alpha)
    reference = model.mixture if model.p == 1 else None
    return mc_oracle.empirical_false_alarm(
        job.system,
        job.noise_eta,
        job.noise_v,
        det,
        N=mc.N,
        burn_in=burn_in,
        seed=mc.seed,
        batches=mc.batches,
        reference=reference,
    )


def run_report(
    command: str,
    model: ResidualModel,
    tuning: TuningReport,
    target_rate: float | None = None,
    empirical: EmpiricalSummary | None = None,
) -> RunReport:
    delta = None if empirical is None else tuning.false_alarm - empirical.alarm_rate
    return RunReport(
        command=command,
        target_rate=target_rate,
        k_star=model.k_star,
        mode_count_exact=model.mode_count_exact,
        mode_count_reduced=model.mode_count,
        reduction=model.reduction.model_dump(),
        tuning=tuning,
        empirical=empirical,
        analytic_minus_empirical=delta,
    )


def evaluate(job: LoadedJob, alpha: float, with_mc: bool = False) -> Tuple[RunReport, ResidualModel]:
    model = build_residual(job)
    tuning = detector.false_alarm_rate(model, alpha)
    empirical = monte_carlo(job, model, alpha) if with_mc else None
    logger.info("False-alarm rate evaluated", alpha=alpha, rate=tuning.false_alarm)
    return run_report("evaluate", model, tuning, empirical=empirical), model


def tune(job: LoadedJob, target_rate: float, with_mc: bool = False) -> Tuple[RunReport, ResidualModel]:
    model = build_residual(job)
    alpha, tuning = detector.tune_threshold(model, target_rate)
    empirical = monte_carlo(job, model, alpha) if with_mc else None
    return run_report("tune", model, tuning, target_rate=target_rate, empirical=empirical), model


def trace_rows(job: LoadedJob) -> Tuple[List[str], np.ndarray]:
    """Header and rows of a simulated trajectory for trace.csv"""
    system = job.system
    noise_v = Gmm.point_mass(system.n) if job.noise_v is None else job.noise_v
    trace = simulate(system, noise_v, job.noise_eta, None, job.config.steps, job.config.seed)
    header = (
        ["step"]
        + [f"x{i}" for i in range(system.n)]
        + [f"x_hat{i}" for i in range(system.n)]
        + [f"y{i}" for i in range(system.p)]
        + [f"r{i}" for i in range(system.p)]
    )
    rows = np.column_stack(
        [np.arange(trace.steps), trace.states, trace.estimates, trace.outputs, trace.residuals]
    )
    return header, rows
