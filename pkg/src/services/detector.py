"""
Chi-squared detector: distance measure, thresholds and false-alarm rates
for residuals distributed as a Gaussian mixture
"""

from concurrent.futures import ThreadPoolExecutor
from typing import List, Sequence, Tuple

import numpy as np
from scipy import linalg as la
from scipy.special import gammainc, gammaincinv

from src.config import settings
from src.models.detector import ChiSquaredDetector, ModeMass
from src.models.mixture import GaussianMode
from src.models.residual import ResidualModel
from src.models.response import TuningReport
from src.services.quadrature import ball_mass
from src.utils.errors import DomainError, QuadratureError
from src.utils.logger import get_logger

logger = get_logger(__name__)

_METHODS = {1: "closed-form-1d", 2: "polar-2d", 3: "spherical-3d"}


def distance_measure(det: ChiSquaredDetector, r: np.ndarray) -> float | np.ndarray:
    """
    z = (r - mean)^T cov^-1 (r - mean) through a triangular solve with chol

    A (N, p) array of residuals gives N distances; for p = 1 a flat array of
    N scalars does too.
    """
    r = np.asarray(r, dtype=float)
    single = r.ndim == 0 or (r.ndim == 1 and r.size == det.p)
    diff = np.atleast_2d(r).reshape(-1, det.p) - det.mean
    w = la.solve_triangular(det.chol, diff.T, lower=True)
    z = np.sum(w * w, axis=0)
    return float(z[0]) if single else z


def gamma_p_lower_regularized(s: float, x: float | np.ndarray) -> float | np.ndarray:
    """Regularized lower incomplete gamma P(s, x)"""
    if s <= 0:
        raise DomainError(f"shape s must be positive, got {s}")
    if np.any(np.asarray(x) < 0):
        raise DomainError("x must be nonnegative")
    return gammainc(s, x)


def gamma_p_inverse(s: float, target: float | np.ndarray) -> float | np.ndarray:
    """x with P(s, x) = target, for target in [0, 1]; target 1 gives +inf"""
    if s <= 0:
        raise DomainError(f"shape s must be positive, got {s}")
    t = np.asarray(target, dtype=float)
    if np.any((t < 0) | (t > 1)) or np.any(np.isnan(t)):
        raise DomainError(f"target must lie in [0, 1], got {target}")
    return gammaincinv(s, target)


def gaussian_threshold(p: int, target_rate: float) -> float:
    """Threshold giving false-alarm rate target_rate when z is chi-squared(p)"""
    if not 0 < target_rate < 1:
        raise DomainError(f"target_rate must lie in (0, 1), got {target_rate}")
    return float(2.0 * gamma_p_inverse(p / 2.0, 1.0 - target_rate))


def whiten(det: ChiSquaredDetector, mean: np.ndarray, cov: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mode parameters in the coordinates where the detector ellipsoid is a ball"""
    m = la.solve_triangular(det.chol, np.asarray(mean, dtype=float) - det.mean, lower=True)
    half = la.solve_triangular(det.chol, np.asarray(cov, dtype=float), lower=True)
    S = la.solve_triangular(det.chol, half.T, lower=True)
    return m, 0.5 * (S + S.T)


def mode_mass(det: ChiSquaredDetector, mode: GaussianMode, seed: int = 0) -> ModeMass:
    """Probability of {z <= threshold} under one Gaussian mode"""
    if mode.dim != det.p:
        raise DomainError(f"mode dimension {mode.dim} does not match detector dimension {det.p}")
    m, S = whiten(det, mode.mean, mode.cov)
    return ball_mass(m, S, float(np.sqrt(det.threshold)), seed=seed)


def _indexed_mass(det: ChiSquaredDetector, mode: GaussianMode, j: int) -> ModeMass:
    try:
        return mode_mass(det, mode, seed=j)
    except QuadratureError as e:
        raise QuadratureError(f"mode {j}: {e.message}", e.best_estimate, e.error_estimate) from e


def detector_for(model: ResidualModel, alpha: float) -> ChiSquaredDetector:
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    return ChiSquaredDetector.build(model.overall_mean, model.overall_cov, alpha)


def false_alarm_rate(model: ResidualModel, alpha: float) -> TuningReport:
    """A = 1 - sum_j pi_j M_j with the detector built from the model's overall moments"""
    det = detector_for(model, alpha)
    p = det.p
    modes = model.mixture.modes
    if settings.workers > 1 and p > 1 and len(modes) > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            masses = list(pool.map(_indexed_mass, [det] * len(modes), modes, range(len(modes))))
    else:
        masses = [_indexed_mass(det, mode, j) for j, mode in enumerate(modes)]

    weights = [float(w) for w in model.mixture.weights]
    values = [mm.value for mm in masses]
    rate = float(np.clip(1.0 - np.dot(weights, values), 0.0, 1.0))
    unconverged = [j for j, mm in enumerate(masses) if not mm.converged]
    if unconverged:
        logger.warning("Mode masses did not converge", modes=unconverged, alpha=alpha)

    report = TuningReport(
        alpha=alpha,
        mode_weights=weights,
        mode_masses=values,
        false_alarm=rate,
        quadrature_error_estimate=float(np.dot(weights, [mm.error for mm in masses])),
        method=_METHODS.get(p, "qmc"),
        unconverged_modes=unconverged,
    )
    return report.model_copy(update={"per_mode_alphas": per_mode_thresholds(report, p)})


def tune_threshold(model: ResidualModel, target_rate: float) -> Tuple[float, TuningReport]:
    """
    Bisection on alpha for false_alarm_rate(alpha) = target_rate

    The bracket upper end starts at p and doubles until the rate drops below
    the target; the rate is non-increasing in alpha.
    """
    if not 0 < target_rate < 1:
        raise DomainError(f"target_rate must lie in (0, 1), got {target_rate}")

    lo, hi = 0.0, float(model.p)
    report = false_alarm_rate(model, hi)
    while report.false_alarm >= target_rate:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise DomainError(f"target_rate {target_rate} not reachable below alpha=1e12")
        report = false_alarm_rate(model, hi)

    best = report
    for step in range(settings.bisection_max_steps):
        if abs(best.false_alarm - target_rate) <= settings.bisection_rate_tol or hi - lo < settings.bisection_width_tol:
            break
        mid = 0.5 * (lo + hi)
        report = false_alarm_rate(model, mid)
        if abs(report.false_alarm - target_rate) < abs(best.false_alarm - target_rate):
            best = report
        if report.false_alarm > target_rate:
            lo = mid
        else:
            hi = mid
        logger.debug("Bisection step", step=step, alpha=mid, rate=report.false_alarm)

    logger.info("Threshold tuned", target_rate=target_rate, alpha=best.alpha, rate=best.false_alarm)
    return best.alpha, best


def per_mode_thresholds(report: TuningReport, p: int) -> List[float]:
    """
    Bank-of-detectors thresholds: mode j alone behaves like a chi-squared
    detector with rate 1 - M_j, so alpha_j = 2 P^-1(M_j, p/2); M_j = 1 gives inf
    """
    masses = np.asarray(report.mode_masses, dtype=float)
    alphas = 2.0 * gamma_p_inverse(p / 2.0, np.clip(masses, 0.0, 1.0))
    return [float(a) for a in np.atleast_1d(alphas)]


def cdf_curve(model: ResidualModel, alphas: Sequence[float]) -> List[Tuple[float, float]]:
    """(alpha, A(alpha)) rows for plotting"""
    return [(float(a), false_alarm_rate(model, float(a)).false_alarm) for a in alphas]


def default_alpha_grid(model: ResidualModel, points: int = 50) -> np.ndarray:
    """Grid over (0, chi-squared 1e-6 quantile] used for cdf_curve.csv"""
    upper = gaussian_threshold(model.p, 1e-6)
    return np.linspace(upper / points, upper, points)
