"""
Residual distribution as a Gaussian mixture

r_k = sum_kappa A_kappa eta_(k-kappa+1) + sum_kappa B_kappa v_(k-kappa) is a
linear combination of independent noise draws, so its mixture is the
independent sum of the affinely mapped noise mixtures.
"""

from typing import Iterator, List, Sequence, Tuple

import numpy as np
from scipy import linalg as la

from src.config import settings
from src.models.mixture import Gmm, ReductionConfig
from src.models.residual import EquivalentNoise, ResidualModel
from src.models.system import LtiSystem
from src.services import gmm as gmm_ops
from src.services.lti_core import require_stable, residual_weights, settling_horizon
from src.utils.arrays import symmetrize
from src.utils.errors import DomainError, GuardExceededError, SingularMatrixError, StructuralError
from src.utils.logger import get_logger

logger = get_logger(__name__)


def exact_mode_count(m1: int, m2: int, k: int) -> int:
    return m1**k * m2 ** (k - 1)


def mode_index_tuples(radices: Sequence[int]) -> Iterator[Tuple[int, ...]]:
    """
    Mixed-radix counter over all digit combinations, first digit fastest

    Init: every digit at its first value. Add: bump the first digit.
    Wrap: a digit past its radix resets and carries into the next one.
    """
    digits = [0] * len(radices)
    total = int(np.prod(radices))
    for _ in range(total):
        yield tuple(digits)
        digits[0] += 1
        pos = 0
        while pos < len(digits) - 1 and digits[pos] >= radices[pos]:
            digits[pos] = 0
            pos += 1
            digits[pos] += 1


def _check_noises(system: LtiSystem, noise_eta: Gmm, noise_v: Gmm):
    if noise_eta.dim != system.p:
        raise StructuralError("noise_eta", f"dimension {noise_eta.dim} does not match p={system.p}")
    if noise_v.dim != system.n:
        raise StructuralError("noise_v", f"dimension {noise_v.dim} does not match n={system.n}")


def residual_gmm_exact(system: LtiSystem, noise_eta: Gmm, noise_v: Gmm, k: int) -> Gmm:
    """One-shot enumeration of all m1^k m2^(k-1) residual modes"""
    _check_noises(system, noise_eta, noise_v)
    m1, m2 = noise_eta.size, noise_v.size
    count = exact_mode_count(m1, m2, k)
    if count > settings.exact_mode_guard:
        raise GuardExceededError(count, settings.exact_mode_guard)

    weights = residual_weights(system, k)
    p = system.p

    # per-position mapped noise parameters, indexed [kappa][mode]
    eta_means = np.stack([noise_eta.means @ A.T for A in weights.A])
    eta_covs = np.stack([np.einsum("ij,mjk,lk->mil", A, noise_eta.covs, A) for A in weights.A])
    v_means = [noise_v.means @ B.T for B in weights.B]
    v_covs = [np.einsum("ij,mjk,lk->mil", B, noise_v.covs, B) for B in weights.B]

    radices = [m1] * k + [m2] * (k - 1)
    digits = np.array(list(mode_index_tuples(radices)), dtype=int).reshape(count, len(radices))

    tau = np.ones(count)
    beta = np.zeros((count, p))
    theta = np.zeros((count, p, p))
    for kappa in range(k):
        idx = digits[:, kappa]
        tau *= noise_eta.weights[idx]
        beta += eta_means[kappa][idx]
        theta += eta_covs[kappa][idx]
    for kappa in range(k - 1):
        idx = digits[:, k + kappa]
        tau *= noise_v.weights[idx]
        beta += v_means[kappa][idx]
        theta += v_covs[kappa][idx]

    return Gmm.trusted(tau / tau.sum(), beta, symmetrize(theta))


def residual_gmm_iterative(
    system: LtiSystem,
    noise_eta: Gmm,
    noise_v: Gmm,
    k: int,
    reduction: ReductionConfig,
) -> Gmm:
    """
    Repeated independent sums of affinely mapped noise mixtures

    With reduction enabled every convolution step is reduced at the
    thresholds scaled by 1/k, then the result once more at full thresholds.
    Zero thresholds skip reduction, which reproduces residual_gmm_exact.
    """
    _check_noises(system, noise_eta, noise_v)
    weights = residual_weights(system, k)
    step_cfg = reduction.scaled(1.0 / k)

    terms = [(noise_eta, A) for A in weights.A] + [(noise_v, B) for B in weights.B]
    acc: Gmm | None = None
    for noise, Q in terms:
        mapped = gmm_ops.affine_map(noise, Q)
        acc = mapped if acc is None else gmm_ops.independent_sum(acc, mapped)
        if reduction.enabled:
            acc = gmm_ops.reduce(acc, step_cfg)
        logger.debug("Convolution step", modes=acc.size)

    if reduction.enabled:
        acc = gmm_ops.reduce(acc, reduction)
    return acc


def steady_state_residual(
    system: LtiSystem,
    noise_eta: Gmm,
    noise_v: Gmm | None = None,
    tail_tol: float | None = None,
    reduction: ReductionConfig | None = None,
    k_star: int | None = None,
) -> ResidualModel:
    """
    Residual mixture at the settling horizon

    noise_v=None means no system noise. reduction=None disables merging;
    k_star overrides the horizon chosen from tail_tol.
    """
    require_stable(system)
    noise_v = Gmm.point_mass(system.n) if noise_v is None else noise_v
    reduction = reduction or ReductionConfig()
    if k_star is None:
        k_star = settling_horizon(system, tail_tol)
    elif k_star < 1:
        raise DomainError(f"k_star must be >= 1, got {k_star}")

    mixture = residual_gmm_iterative(system, noise_eta, noise_v, k_star, reduction)
    mean, cov = gmm_ops.moments(mixture)
    exact = exact_mode_count(noise_eta.size, noise_v.size, k_star)
    logger.info(
        "Steady-state residual built",
        k_star=k_star,
        mode_count_exact=exact,
        mode_count_reduced=mixture.size,
    )
    return ResidualModel(
        mixture=mixture,
        overall_mean=mean,
        overall_cov=cov,
        k_star=k_star,
        reduction=reduction,
        mode_count_exact=exact,
    )


def _stein_solve(As: List[np.ndarray], K: np.ndarray) -> np.ndarray:
    """Solve sum_kappa A C A^T = K for symmetric C"""
    p = K.shape[0]
    operator = sum(np.kron(A, A) for A in As)
    C = np.linalg.solve(operator, K.reshape(p * p)).reshape(p, p)
    return symmetrize(C)


def equivalent_noise(model: ResidualModel, system: LtiSystem, k_star: int | None = None) -> EquivalentNoise:
    """
    Hypothetical Gaussian measurement noise per residual mode

    E = sum_(kappa <= k*) A_kappa. a_j = E^-1 mu_j gives the mode mean; C_j solves
    sum A_kappa C_j A_kappa^T = K_j so that N(a_j, C_j) fed alone through the
    residual recursion reproduces (mu_j, K_j). E^-1 K_j E^-T is kept as literal_covs.
    """
    k_star = model.k_star if k_star is None else k_star
    weights = residual_weights(system, k_star)
    E = sum(weights.A)
    condition = float(np.linalg.cond(E))
    if not np.isfinite(condition) or condition > 1.0 / np.finfo(float).eps:
        raise SingularMatrixError("E", condition)

    E_inv = la.inv(E)
    operator = sum(np.kron(A, A) for A in weights.A)
    if np.linalg.cond(operator) > 1.0 / np.finfo(float).eps:
        raise SingularMatrixError("sum A (x) A", float(np.linalg.cond(operator)))

    means = [E_inv @ mu for mu in model.mixture.means]
    covs = [_stein_solve(weights.A, K) for K in model.mixture.covs]
    literal = [symmetrize(E_inv @ K @ E_inv.T) for K in model.mixture.covs]
    return EquivalentNoise(E=E, condition_number=condition, means=means, covs=covs, literal_covs=literal)
