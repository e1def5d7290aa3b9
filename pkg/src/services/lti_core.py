from typing import List, Protocol, Tuple

import numpy as np
from scipy import linalg as la

from src.config import settings
from src.models.system import LtiSystem, ResidualWeights, SimTrace, StabilityReport
from src.utils.arrays import symmetrize
from src.utils.errors import DomainError, InstabilityError, StructuralError
from src.utils.logger import get_logger

logger = get_logger(__name__)


class NoiseSampler(Protocol):
    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        ...


def validate_system(system: LtiSystem) -> StabilityReport:
    """Spectral radius of F - LC and whether it is below one"""
    eigvals = la.eigvals(system.closed_loop)
    dominant = eigvals[np.argmax(np.abs(eigvals))]
    radius = float(np.abs(dominant))
    return StabilityReport(
        spectral_radius=radius,
        eigenvalue_real=float(dominant.real),
        eigenvalue_imag=float(dominant.imag),
        stable=radius < 1.0,
    )


def require_stable(system: LtiSystem) -> StabilityReport:
    report = validate_system(system)
    if not report.stable:
        raise InstabilityError(report.spectral_radius, report.dominant_eigenvalue)
    return report


def closed_loop_powers(system: LtiSystem, count: int) -> List[np.ndarray]:
    """[(F-LC)^0, ..., (F-LC)^(count-1)] by repeated multiplication"""
    M = system.closed_loop
    powers = [np.eye(system.n)]
    for _ in range(count - 1):
        powers.append(powers[-1] @ M)
    return powers


def residual_weights(system: LtiSystem, k: int) -> ResidualWeights:
    """
    A_1 = I, A_kappa = -C (F-LC)^(kappa-2) L for 2 <= kappa <= k,
    B_kappa = C (F-LC)^(kappa-1) for 1 <= kappa <= k-1
    """
    if k < 1:
        raise DomainError(f"horizon k must be >= 1, got {k}")
    require_stable(system)

    powers = closed_loop_powers(system, k)
    A = [np.eye(system.p)] + [-system.C @ powers[kappa - 2] @ system.L for kappa in range(2, k + 1)]
    B = [system.C @ powers[kappa - 1] for kappa in range(1, k)]
    return ResidualWeights(horizon=k, A=A, B=B)


def settling_horizon(system: LtiSystem, tail_tol: float | None = None) -> int:
    """
    Smallest k with ||(F-LC)^(k-1)|| * max(1, ||L||) * ||C|| < tail_tol

    Every dropped A_kappa, B_kappa then has spectral norm below tail_tol.
    """
    tail_tol = settings.tail_tol if tail_tol is None else tail_tol
    if tail_tol <= 0:
        raise DomainError(f"tail_tol must be positive, got {tail_tol}")
    require_stable(system)

    M = system.closed_loop
    gain = max(1.0, la.norm(system.L, 2)) * la.norm(system.C, 2)
    power = np.eye(system.n)
    for k in range(1, settings.max_horizon + 1):
        if la.norm(power, 2) * gain < tail_tol:
            logger.debug("Settling horizon found", k_star=k, tail_tol=tail_tol)
            return k
        power = power @ M

    raise DomainError(f"no settling horizon below max_horizon={settings.max_horizon} for tail_tol={tail_tol}")


def lyapunov_residual_cov(
    system: LtiSystem,
    R1: np.ndarray,
    R2: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solve (F-LC) P (F-LC)^T - P + R1 + L R2 L^T = 0

    Returns:
        P (n x n) and the Gaussian-case residual covariance CPC^T + R2
    """
    R1 = np.atleast_2d(np.asarray(R1, dtype=float))
    R2 = np.atleast_2d(np.asarray(R2, dtype=float))
    if R1.shape != (system.n, system.n):
        raise StructuralError("R1", f"must be {system.n} x {system.n}, got {R1.shape}")
    if R2.shape != (system.p, system.p):
        raise StructuralError("R2", f"must be {system.p} x {system.p}, got {R2.shape}")
    require_stable(system)

    M = system.closed_loop
    Q = symmetrize(R1 + system.L @ R2 @ system.L.T)
    P = symmetrize(la.solve_discrete_lyapunov(M, Q))

    residual = la.norm(M @ P @ M.T - P + Q)
    if residual > settings.lyapunov_tol * max(1.0, la.norm(P)):
        logger.warning("Lyapunov residual above tolerance", residual=residual)

    Sigma = symmetrize(system.C @ P @ system.C.T + R2)
    return P, Sigma


def simulate(
    system: LtiSystem,
    noise_v: NoiseSampler,
    noise_eta: NoiseSampler,
    u: np.ndarray | None,
    steps: int,
    seed: int,
    x0: np.ndarray | None = None,
    x_hat0: np.ndarray | None = None,
) -> SimTrace:
    """
    Run plant and estimator for `steps` steps

    Noises are drawn up front from one generator, so the residual sequence
    does not depend on the input sequence.
    """
    n, p, m = system.n, system.p, system.m
    rng = np.random.default_rng(seed)
    v = np.asarray(noise_v.draw(steps, rng), dtype=float).reshape(steps, -1)
    eta = np.asarray(noise_eta.draw(steps, rng), dtype=float).reshape(steps, -1)
    if v.shape[1] != n:
        raise StructuralError("noise_v", f"samples have dimension {v.shape[1]}, expected {n}")
    if eta.shape[1] != p:
        raise StructuralError("noise_eta", f"samples have dimension {eta.shape[1]}, expected {p}")

    u = np.zeros((steps, m)) if u is None else np.asarray(u, dtype=float).reshape(steps, -1)
    if u.shape[1] != m:
        raise StructuralError("u", f"inputs have dimension {u.shape[1]}, expected {m}")

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    x_hat = np.zeros(n) if x_hat0 is None else np.asarray(x_hat0, dtype=float)

    states = np.empty((steps, n))
    estimates = np.empty((steps, n))
    outputs = np.empty((steps, p))
    for k in range(steps):
        y = system.C @ x + eta[k]
        states[k], estimates[k], outputs[k] = x, x_hat, y
        x, x_hat = (
            system.F @ x + system.G @ u[k] + v[k],
            system.F @ x_hat + system.G @ u[k] + system.L @ (y - system.C @ x_hat),
        )

    residuals = outputs - estimates @ system.C.T
    return SimTrace(states=states, estimates=estimates, outputs=outputs, residuals=residuals, inputs=u)
