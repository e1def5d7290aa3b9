from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import linalg as la

from src.utils.arrays import as_array, symmetrize
from src.utils.errors import StructuralError


class ChiSquaredDetector(BaseModel):
    """Alarm when (r - mean)^T cov^-1 (r - mean) > threshold"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray
    threshold: float = Field(..., gt=0)

    @field_validator("mean", mode="before")
    @classmethod
    def _coerce_mean(cls, value: Any) -> np.ndarray:
        return as_array(np.atleast_1d(np.asarray(value, dtype=float)), "mean", ndim=1)

    @field_validator("cov", "chol", mode="before")
    @classmethod
    def _coerce_matrix(cls, value: Any, info) -> np.ndarray:
        return as_array(np.atleast_2d(np.asarray(value, dtype=float)), info.field_name, ndim=2)

    @model_validator(mode="after")
    def _check(self) -> "ChiSquaredDetector":
        p = self.mean.shape[0]
        if self.cov.shape != (p, p) or self.chol.shape != (p, p):
            raise StructuralError("cov", f"must be {p} x {p}, got {self.cov.shape}")
        if not np.allclose(self.chol @ self.chol.T, self.cov, rtol=0.0, atol=1e-10 * max(1.0, la.norm(self.cov))):
            raise StructuralError("chol", "chol @ chol.T does not reproduce cov")
        return self

    @classmethod
    def build(cls, mean: Any, cov: Any, threshold: float) -> "ChiSquaredDetector":
        """Factor cov; a non-SPD covariance is a structural error"""
        cov = symmetrize(np.atleast_2d(np.asarray(cov, dtype=float)))
        try:
            chol = la.cholesky(cov, lower=True)
        except la.LinAlgError as e:
            raise StructuralError("cov", "detector covariance must be symmetric positive definite") from e
        return cls(mean=mean, cov=cov, chol=chol, threshold=threshold)

    @property
    def p(self) -> int:
        return self.mean.shape[0]


class ModeMass(BaseModel):
    """Probability of the detector's sub-threshold ellipsoid under one mode"""

    value: float = Field(..., ge=0, le=1)
    error: float = Field(..., ge=0)
    method: str
    converged: bool = True
