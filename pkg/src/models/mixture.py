from typing import Any, Dict, Iterable, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.config import settings
from src.utils.arrays import as_array
from src.utils.errors import ConfigError, StructuralError
from src.utils.logger import get_logger

logger = get_logger(__name__)


def _check_covariances(covs: np.ndarray, field: str):
    """Symmetric to psd_tol and eigenvalues >= -psd_tol (relative to scale)"""
    scale = np.maximum(1.0, np.abs(covs).max(axis=(-2, -1), initial=0.0))
    asym = np.abs(covs - np.swapaxes(covs, -1, -2)).max(axis=(-2, -1), initial=0.0)
    if np.any(asym > settings.psd_tol * scale):
        raise StructuralError(field, "covariance is not symmetric")
    eigs = np.linalg.eigvalsh(covs)
    if np.any(eigs.min(axis=-1) < -settings.psd_tol * scale):
        raise StructuralError(field, "covariance is not positive semidefinite")


class GaussianMode(BaseModel):
    """One weighted Gaussian component N(mean, cov)"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weight: float = Field(..., gt=0, le=1)
    mean: np.ndarray
    cov: np.ndarray

    @field_validator("mean", mode="before")
    @classmethod
    def _coerce_mean(cls, value: Any) -> np.ndarray:
        return as_array(value, "mean", ndim=1)

    @field_validator("cov", mode="before")
    @classmethod
    def _coerce_cov(cls, value: Any) -> np.ndarray:
        return as_array(value, "cov", ndim=2)

    @model_validator(mode="after")
    def _check(self) -> "GaussianMode":
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise StructuralError("cov", f"must be {d} x {d}, got {self.cov.shape}")
        _check_covariances(self.cov, "cov")
        return self

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


class Gmm(BaseModel):
    """
    Weighted Gaussian mixture over R^d

    Stored as stacked arrays: weights (m,), means (m, d), covs (m, d, d).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    @field_validator("weights", mode="before")
    @classmethod
    def _coerce_weights(cls, value: Any) -> np.ndarray:
        return as_array(value, "weights", ndim=1)

    @field_validator("means", mode="before")
    @classmethod
    def _coerce_means(cls, value: Any) -> np.ndarray:
        return as_array(value, "means", ndim=2)

    @field_validator("covs", mode="before")
    @classmethod
    def _coerce_covs(cls, value: Any) -> np.ndarray:
        return as_array(value, "covs", ndim=3)

    @model_validator(mode="after")
    def _check(self) -> "Gmm":
        m = self.weights.shape[0]
        if m == 0:
            raise StructuralError("modes", "mixture needs at least one mode")
        d = self.means.shape[1]
        if self.means.shape[0] != m or self.covs.shape != (m, d, d):
            raise StructuralError(
                "modes", f"shapes disagree: weights {self.weights.shape}, means {self.means.shape}, covs {self.covs.shape}"
            )
        if np.any(self.weights < 0):
            raise StructuralError("weight", "mixture weights must be nonnegative")
        total = float(self.weights.sum())
        if abs(total - 1.0) > settings.weight_tol:
            raise StructuralError("weight", f"mixture weights sum to {total!r}, expected 1")
        _check_covariances(self.covs, "cov")
        return self

    # ============================================================
    # Constructors
    # ============================================================

    @classmethod
    def trusted(cls, weights: np.ndarray, means: np.ndarray, covs: np.ndarray) -> "Gmm":
        """Skip validation; for outputs of closed mixture operations"""
        for arr in (weights, means, covs):
            arr.setflags(write=False)
        return cls.model_construct(weights=weights, means=means, covs=covs)

    @classmethod
    def from_modes(cls, modes: Iterable[GaussianMode]) -> "Gmm":
        modes = list(modes)
        if not modes:
            raise StructuralError("modes", "mixture needs at least one mode")
        return cls(
            weights=[mode.weight for mode in modes],
            means=np.stack([mode.mean for mode in modes]),
            covs=np.stack([mode.cov for mode in modes]),
        )

    @classmethod
    def gaussian(cls, mean: Any, cov: Any) -> "Gmm":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls(weights=[1.0], means=mean[None, :], covs=cov[None, :, :])

    @classmethod
    def point_mass(cls, dim: int) -> "Gmm":
        """Zero noise in R^dim"""
        return cls.trusted(np.ones(1), np.zeros((1, dim)), np.zeros((1, dim, dim)))

    @classmethod
    def from_document(cls, doc: Dict[str, Any], normalize: bool = True) -> "Gmm":
        """
        Parse {"dim": d, "modes": [{"weight": w, "mean": [...], "cov": [[...]]}]}

        Weights off by less than weight_renormalize_tol are rescaled when
        normalize is set (printed tables are rounded to four digits).
        """
        if not isinstance(doc, dict) or "modes" not in doc:
            raise ConfigError("GMM document must be an object with a 'modes' list")
        raw_modes = doc["modes"]
        if not isinstance(raw_modes, list) or not raw_modes:
            raise ConfigError("modes: must be a nonempty list")

        weights, means, covs = [], [], []
        for index, raw in enumerate(raw_modes):
            try:
                weights.append(float(raw["weight"]))
                means.append(as_array(raw["mean"], f"modes[{index}].mean", ndim=1))
                covs.append(as_array(raw["cov"], f"modes[{index}].cov", ndim=2))
            except (KeyError, TypeError) as e:
                raise ConfigError(f"modes[{index}]: expected weight, mean and cov ({e})") from e

        dim = doc.get("dim", means[0].shape[0])
        for index, (mean, cov) in enumerate(zip(means, covs)):
            if mean.shape != (dim,) or cov.shape != (dim, dim):
                raise StructuralError(f"modes[{index}]", f"does not match dim={dim}")

        weights = np.asarray(weights)
        total = float(weights.sum())
        if abs(total - 1.0) > settings.weight_tol:
            if normalize and abs(total - 1.0) <= settings.weight_renormalize_tol:
                logger.warning("Renormalizing mixture weights", weight_sum=total)
                weights = weights / total
            else:
                raise ConfigError(f"modes: weights sum to {total!r}, expected 1")

        return cls(weights=weights, means=np.stack(means), covs=np.stack(covs))

    def to_document(self) -> Dict[str, Any]:
        return {
            "dim": self.dim,
            "modes": [
                {"weight": float(w), "mean": mu.tolist(), "cov": K.tolist()}
                for w, mu, K in zip(self.weights, self.means, self.covs)
            ],
        }

    # ============================================================
    # Accessors
    # ============================================================

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def modes(self) -> List[GaussianMode]:
        return [self.mode(j) for j in range(self.size)]

    def mode(self, j: int) -> GaussianMode:
        return GaussianMode.model_construct(weight=float(self.weights[j]), mean=self.means[j], cov=self.covs[j])

    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Draw count samples (count, d) from an existing generator"""
        from src.services.gmm import draw_from

        return draw_from(self, count, rng)


class ReductionConfig(BaseModel):
    """Merge thresholds: Euclidean on means, Frobenius on covariances"""

    model_config = ConfigDict(frozen=True)

    d_mu: float = Field(0.0, ge=0)
    d_K: float = Field(0.0, ge=0)
    moment_match: bool = True

    @property
    def enabled(self) -> bool:
        return self.d_mu > 0 or self.d_K > 0

    def scaled(self, factor: float) -> "ReductionConfig":
        return ReductionConfig(d_mu=self.d_mu * factor, d_K=self.d_K * factor, moment_match=self.moment_match)
