"""
Probability of a centered ball under a Gaussian

After whitening with the detector's Cholesky factor the ellipsoid
{z <= alpha} becomes the ball of radius sqrt(alpha); every mode mass is the
probability of that ball under the whitened mode N(m, S).

For p = 2 and p = 3 the ball is swept in polar or spherical coordinates with
the polar axis on the mode's mean. Along each ray the radial integral has a
closed form in erf and exp; the angles use composite Gauss-Legendre panels
split at the mode's angular reach, so a narrow mode always has nodes on it.
"""

import math
from typing import Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import null_space
from scipy.special import gammaincinv, ndtr, ndtri
from scipy.stats import qmc

from src.config import settings
from src.models.detector import ModeMass
from src.utils.errors import QuadratureError
from src.utils.logger import get_logger

logger = get_logger(__name__)

# probability left outside the reach used to short-circuit far or enclosed modes
_TAIL_MASS = 1e-14
_QUARTER = 0.5 * math.pi


def _regularized(S: np.ndarray) -> np.ndarray:
    p = S.shape[0]
    eigs = np.linalg.eigvalsh(S)
    if eigs.min() <= 1e-14 * max(1.0, eigs.max()):
        jitter = 1e-12 * max(np.trace(S), 1e-300) / p
        return S + jitter * np.eye(p)
    return S


def _interval_prob(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Phi(hi) - Phi(lo), taken from the upper tail when lo > 0"""
    return np.where(lo > 0, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))


def _radial_moment(e: np.ndarray, m: np.ndarray, P: np.ndarray, radius: float, power: int) -> np.ndarray:
    """
    Integral of r**power * exp(-(r e - m)^T P (r e - m) / 2) over 0 <= r <= radius
    for every unit direction in the rows of e; power is 1 or 2
    """
    Pm = P @ m
    a = np.einsum("ni,ij,nj->n", e, P, e)
    b = e @ Pm
    c = float(m @ Pm)
    s = 1.0 / np.sqrt(a)
    mu = b / a
    # squared Mahalanobis distance from m to the line through e
    offset = np.maximum(c - b * mu, 0.0)
    k0 = np.exp(-0.5 * offset) * s * math.sqrt(2 * math.pi) * _interval_prob(-mu / s, (radius - mu) / s)
    e0 = math.exp(-0.5 * c)
    e_r = np.exp(-0.5 * (a * radius**2 - 2.0 * b * radius + c))
    if power == 1:
        return mu * k0 + s**2 * (e0 - e_r)
    return (s**2 + mu**2) * k0 + s**2 * (mu * e0 - (radius + mu) * e_r)


def _mode_frame(m: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Orthonormal columns: S's principal axes across the mode direction, widest first, then the mode direction"""
    d = float(np.linalg.norm(m))
    u = m / d if d > 0 else np.linalg.eigh(S)[1][:, 0]
    across = null_space(u[None, :])
    _, W = np.linalg.eigh(across.T @ S @ across)
    return np.column_stack([across @ W[:, ::-1], u])


def _edges(lo: float, hi: float, cuts: Tuple[float, ...]) -> np.ndarray:
    return np.unique(np.r_[lo, [c for c in cuts if lo < c < hi], hi])


def _panel_nodes(edges: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    return (half * (x + 1.0) + lo).ravel(), (half * w).ravel()


class _AngularRule:
    """Composite Gauss-Legendre grid over the directions of R^p, p in {2, 3}"""

    def __init__(self, p: int, spread: float):
        self.p = p
        cuts = (-spread, spread) if spread < math.pi else ()
        if p == 2:
            self.theta_edges = _edges(-math.pi, math.pi, (-_QUARTER, _QUARTER) + cuts)
            self.phi_edges = None
        else:
            self.theta_edges = _edges(0.0, math.pi, (_QUARTER,) + cuts)
            self.phi_edges = _edges(0.0, 2 * math.pi, (_QUARTER, math.pi, 3 * _QUARTER))

    def size(self, n: int) -> int:
        count = n * (len(self.theta_edges) - 1)
        if self.phi_edges is not None:
            count *= n * (len(self.phi_edges) - 1)
        return count

    def grid(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """Unit directions in the mode frame and their weights, sin(theta) included"""
        t, wt = _panel_nodes(self.theta_edges, n)
        if self.p == 2:
            return np.column_stack([np.sin(t), np.cos(t)]), wt
        f, wf = _panel_nodes(self.phi_edges, n)
        tt, ff = np.meshgrid(t, f, indexing="ij")
        directions = np.stack([np.sin(tt) * np.cos(ff), np.sin(tt) * np.sin(ff), np.cos(tt)], axis=-1)
        weights = np.outer(wt, wf) * np.sin(tt)
        return directions.reshape(-1, 3), weights.ravel()


def _sweep(m: np.ndarray, S: np.ndarray, radius: float, rule: _AngularRule, frame: np.ndarray, n: int) -> float:
    p = m.shape[0]
    L = np.linalg.cholesky(S)
    P = np.linalg.inv(S)
    norm = (2 * math.pi) ** (-0.5 * p) / np.prod(np.diag(L))
    directions, weights = rule.grid(n)
    values = _radial_moment(directions @ frame.T, m, P, radius, p - 1)
    return float(norm * (weights @ values))


def _closed_form_1d(m: float, var: float, radius: float) -> ModeMass:
    if var <= 0:
        return ModeMass(value=float(abs(m) <= radius), error=0.0, method="closed-form-1d")
    sd = math.sqrt(var)
    value = ndtr((radius - m) / sd) - ndtr((-radius - m) / sd)
    return ModeMass(value=float(np.clip(value, 0.0, 1.0)), error=0.0, method="closed-form-1d")


def _qmc(m: np.ndarray, S: np.ndarray, radius: float, seed: int) -> ModeMass:
    p = m.shape[0]
    L = np.linalg.cholesky(S)
    per_replicate = max(settings.qmc_points // settings.qmc_replicates, 2)
    exponent = int(math.log2(per_replicate))
    estimates = []
    for replicate in range(settings.qmc_replicates):
        sobol = qmc.Sobol(d=p, scramble=True, seed=np.random.default_rng([seed, replicate]))
        u = np.clip(sobol.random_base2(exponent), 1e-15, 1 - 1e-15)
        x = m + ndtri(u) @ L.T
        estimates.append(np.mean(np.sum(x * x, axis=1) <= radius**2))
    estimates = np.asarray(estimates)
    error = float(estimates.std(ddof=1) / math.sqrt(len(estimates))) if len(estimates) > 1 else 0.0
    return ModeMass(value=float(np.clip(estimates.mean(), 0.0, 1.0)), error=error, method="qmc")


def ball_mass(m: np.ndarray, S: np.ndarray, radius: float, seed: int = 0) -> ModeMass:
    """
    P(||x|| <= radius) for x ~ N(m, S)

    p = 2 and p = 3 double the angular order until two successive doublings
    each move the estimate by less than quadrature_tol.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    p = m.shape[0]
    if p == 1:
        return _closed_form_1d(float(m[0]), float(S[0, 0]), radius)

    method = {2: "polar-2d", 3: "spherical-3d"}.get(p, "qmc")
    reach = math.sqrt(max(np.linalg.eigvalsh(S).max(), 0.0) * 2.0 * gammaincinv(p / 2.0, 1.0 - _TAIL_MASS))
    distance = float(np.linalg.norm(m))
    if distance + reach <= radius:
        return ModeMass(value=1.0, error=_TAIL_MASS, method=method)
    if distance - reach >= radius:
        return ModeMass(value=0.0, error=_TAIL_MASS, method=method)

    S = _regularized(S)
    if method == "qmc":
        return _qmc(m, S, radius, seed)

    spread = math.asin(reach / distance) if reach < distance else math.pi
    rule = _AngularRule(p, spread)
    frame = _mode_frame(m, S)
    n = settings.quadrature_initial_order
    previous = _sweep(m, S, radius, rule, frame, n)
    error = 1.0
    agreed = 0
    for _ in range(settings.quadrature_max_doublings):
        n *= 2
        if rule.size(n) > settings.quadrature_max_points:
            break
        estimate = _sweep(m, S, radius, rule, frame, n)
        if not np.isfinite(estimate):
            raise QuadratureError(f"non-finite quadrature estimate at order {n}", previous, error)
        error = abs(estimate - previous)
        previous = estimate
        agreed = agreed + 1 if error < settings.quadrature_tol else 0
        if agreed == 2:
            return ModeMass(value=float(np.clip(estimate, 0.0, 1.0)), error=error, method=method)

    logger.warning("Quadrature did not converge", order=n, error=error)
    return ModeMass(value=float(np.clip(previous, 0.0, 1.0)), error=error, method=method, converged=False)
