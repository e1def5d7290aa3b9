"""
Gaussian-mixture algebra

Affine maps and independent sums are closed on mixtures, so every
operation here returns a new Gmm without leaving the family.
"""

import warnings
from typing import List, Tuple

import numpy as np
from scipy.special import ndtr
from scipy.stats import multivariate_normal
from sklearn.exceptions import ConvergenceWarning
from sklearn.mixture import GaussianMixture

from src.config import settings
from src.models.mixture import Gmm, ReductionConfig
from src.utils.arrays import symmetrize
from src.utils.errors import DomainError, FitError, StructuralError
from src.utils.logger import get_logger

logger = get_logger(__name__)


# ============================================================
# Closed operations
# ============================================================

def affine_map(g: Gmm, Q: np.ndarray, shift: np.ndarray | None = None) -> Gmm:
    """Distribution of Qx + shift for x ~ g"""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape[1] != g.dim:
        raise StructuralError("Q", f"must have {g.dim} columns, got {Q.shape}")
    shift = np.zeros(Q.shape[0]) if shift is None else np.asarray(shift, dtype=float)
    if shift.shape != (Q.shape[0],):
        raise StructuralError("shift", f"must have length {Q.shape[0]}, got {shift.shape}")

    means = g.means @ Q.T + shift
    covs = symmetrize(np.einsum("ij,mjk,lk->mil", Q, g.covs, Q))
    return Gmm.trusted(g.weights.copy(), means, covs)


def independent_sum(a: Gmm, b: Gmm) -> Gmm:
    """Distribution of x + y for independent x ~ a, y ~ b (cross product of modes, a-major)"""
    if a.dim != b.dim:
        raise StructuralError("b", f"dimension {b.dim} does not match {a.dim}")
    d = a.dim
    weights = np.outer(a.weights, b.weights).ravel()
    weights = weights / weights.sum()
    means = (a.means[:, None, :] + b.means[None, :, :]).reshape(-1, d)
    covs = (a.covs[:, None, :, :] + b.covs[None, :, :, :]).reshape(-1, d, d)
    return Gmm.trusted(weights, means, covs)


def moments(g: Gmm) -> Tuple[np.ndarray, np.ndarray]:
    """Overall mean and covariance of the mixture"""
    mean = g.weights @ g.means
    gamma = mean - g.means
    spread = np.einsum("mi,mj->mij", gamma, gamma)
    cov = symmetrize(np.einsum("m,mij->ij", g.weights, g.covs + spread))
    return mean, cov


# ============================================================
# Densities
# ============================================================

def pdf(g: Gmm, x: np.ndarray) -> np.ndarray | float:
    """Mixture density at x (d,) or at each row of x (N, d)"""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1 and x.size == g.dim
    points = x.reshape(-1, g.dim)

    density = np.zeros(points.shape[0])
    for w, mu, K in zip(g.weights, g.means, g.covs):
        density += w * np.atleast_1d(multivariate_normal(mean=mu, cov=K, allow_singular=True).pdf(points))
    return float(density[0]) if single else density


def cdf_1d(g: Gmm, x: np.ndarray | float) -> np.ndarray | float:
    """Mixture CDF for d = 1 as a weighted sum of normal CDFs"""
    if g.dim != 1:
        raise DomainError(f"cdf_1d needs a 1-D mixture, got dim={g.dim}")
    x = np.asarray(x, dtype=float)
    mu = g.means[:, 0]
    sd = np.sqrt(np.maximum(g.covs[:, 0, 0], 0.0))

    z = x[..., None] - mu
    with np.errstate(divide="ignore", invalid="ignore"):
        per_mode = np.where(sd > 0, ndtr(z / np.where(sd > 0, sd, 1.0)), (z >= 0).astype(float))
    value = per_mode @ g.weights
    return float(value) if np.ndim(value) == 0 else value


# ============================================================
# Sampling
# ============================================================

def _cholesky_factors(covs: np.ndarray) -> np.ndarray:
    """Per-mode lower factors; jitter 1e-12 * trace/d on failure, eigen square root as last resort"""
    factors = np.empty_like(covs)
    d = covs.shape[-1]
    for j, K in enumerate(covs):
        try:
            factors[j] = np.linalg.cholesky(K)
            continue
        except np.linalg.LinAlgError:
            pass
        jitter = 1e-12 * np.trace(K) / d
        try:
            factors[j] = np.linalg.cholesky(K + jitter * np.eye(d))
        except np.linalg.LinAlgError:
            vals, vecs = np.linalg.eigh(K)
            factors[j] = vecs * np.sqrt(np.clip(vals, 0.0, None))
    return factors


def draw_from(g: Gmm, count: int, rng: np.random.Generator) -> np.ndarray:
    labels = rng.choice(g.size, size=count, p=g.weights / g.weights.sum())
    z = rng.standard_normal((count, g.dim))
    factors = _cholesky_factors(g.covs)
    return g.means[labels] + np.einsum("nij,nj->ni", factors[labels], z)


def sample(g: Gmm, count: int, seed: int) -> np.ndarray:
    """count samples as a (count, d) array; deterministic given seed"""
    return draw_from(g, count, np.random.default_rng(seed))


# ============================================================
# Reduction
# ============================================================

def canonical_order(g: Gmm) -> np.ndarray:
    """Weight descending, then lexicographic mean"""
    keys = [g.means[:, i] for i in reversed(range(g.dim))] + [-g.weights]
    return np.lexsort(keys)


def auto_reduction(g: Gmm, moment_match: bool = True) -> ReductionConfig:
    """Thresholds at one percent of the mixture spread"""
    _, cov = moments(g)
    return ReductionConfig(
        d_mu=0.01 * float(np.linalg.norm(np.sqrt(np.clip(np.diag(cov), 0.0, None)))),
        d_K=0.01 * float(np.linalg.norm(cov, "fro")),
        moment_match=moment_match,
    )


def reduce(g: Gmm, cfg: ReductionConfig) -> Gmm:
    """
    Greedy first-fit merge of nearly identical modes

    Modes are visited in canonical order; a mode joins the first cluster whose
    representative (its first member) lies within d_mu in mean and d_K in
    Frobenius covariance distance. Clusters are moment matched unless
    cfg.moment_match is off, in which case the representative keeps its own
    parameters and only the weights add up.
    """
    order = canonical_order(g)
    m, d = g.size, g.dim
    rep_means = np.empty((m, d))
    rep_covs = np.empty((m, d * d))
    rep_index = np.empty(m, dtype=int)
    assign = np.empty(m, dtype=int)
    flat_covs = g.covs.reshape(m, d * d)
    clusters = 0

    for idx in order:
        if clusters:
            d_mean = np.linalg.norm(rep_means[:clusters] - g.means[idx], axis=1)
            d_cov = np.linalg.norm(rep_covs[:clusters] - flat_covs[idx], axis=1)
            hits = np.flatnonzero((d_mean <= cfg.d_mu) & (d_cov <= cfg.d_K))
            if hits.size:
                assign[idx] = hits[0]
                continue
        rep_means[clusters] = g.means[idx]
        rep_covs[clusters] = flat_covs[idx]
        rep_index[clusters] = idx
        assign[idx] = clusters
        clusters += 1

    weights = np.bincount(assign, weights=g.weights, minlength=clusters)
    if cfg.moment_match:
        means = np.zeros((clusters, d))
        np.add.at(means, assign, g.weights[:, None] * g.means)
        means /= weights[:, None]
        delta = g.means - means[assign]
        second = g.covs + np.einsum("mi,mj->mij", delta, delta)
        covs = np.zeros((clusters, d, d))
        np.add.at(covs, assign, g.weights[:, None, None] * second)
        covs = symmetrize(covs / weights[:, None, None])
    else:
        means = g.means[rep_index[:clusters]].copy()
        covs = g.covs[rep_index[:clusters]].copy()

    weights = weights / weights.sum()
    logger.debug("Reduced mixture", modes_in=m, modes_out=clusters)
    return Gmm.trusted(weights, means, covs)


# ============================================================
# EM fitting
# ============================================================

def _fit_once(samples: np.ndarray, mode_count: int, seed: int) -> Tuple[GaussianMixture, List[float]]:
    model = GaussianMixture(
        n_components=mode_count,
        covariance_type="full",
        tol=settings.em_tol,
        reg_covar=settings.em_reg_covar,
        max_iter=1,
        init_params="k-means++",
        random_state=seed,
        warm_start=True,
    )
    trace: List[float] = []
    with warnings.catch_warnings():
        # one EM step per fit() call so the log-likelihood trace is observable
        warnings.simplefilter("ignore", ConvergenceWarning)
        for _ in range(settings.em_max_iter):
            model.fit(samples)
            trace.append(float(model.lower_bound_))
            if len(trace) > 1 and abs(trace[-1] - trace[-2]) < settings.em_tol:
                break

    if np.any(model.weights_ < settings.em_min_weight):
        raise FitError(f"degenerate component: weight {model.weights_.min():.3e}")
    return model, trace


def em_fit(samples: np.ndarray, mode_count: int, seed: int) -> Tuple[Gmm, List[float]]:
    """
    Fit a full-covariance mixture by EM with k-means++ initialisation

    Returns the mixture and the per-iteration average log-likelihood. A
    degenerate fit is re-seeded once (seed + 1) before FitError is raised.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    count, d = samples.shape
    if mode_count < 1:
        raise DomainError("mode_count must be at least 1")
    if count < 10 * mode_count * d:
        raise DomainError(f"need at least {10 * mode_count * d} samples for {mode_count} modes in {d} dimensions, got {count}")

    last_error: Exception | None = None
    for attempt, attempt_seed in enumerate((seed, seed + 1)):
        try:
            model, trace = _fit_once(samples, mode_count, attempt_seed)
        except (FitError, ValueError) as e:
            last_error = e
            logger.warning("EM fit degenerate, re-seeding", attempt=attempt, error=str(e))
            continue
        logger.info("EM fit complete", modes=mode_count, iterations=len(trace), loglik=trace[-1])
        gmm = Gmm(
            weights=model.weights_ / model.weights_.sum(),
            means=model.means_,
            covs=symmetrize(model.covariances_),
        )
        return gmm, trace

    raise FitError(f"EM fit failed after re-seeding: {last_error}")


def log_likelihood(g: Gmm, samples: np.ndarray) -> float:
    """Average log-likelihood per sample"""
    samples = np.asarray(samples, dtype=float).reshape(-1, g.dim)
    return float(np.mean(np.log(np.atleast_1d(pdf(g, samples)))))
