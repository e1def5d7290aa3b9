from typing import Any, Dict, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.models.mixture import Gmm, ReductionConfig
from src.utils.errors import ConfigError, StructuralError


class ResidualModel(BaseModel):
    """Steady-state residual mixture with its overall moments and provenance"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mixture: Gmm
    overall_mean: np.ndarray
    overall_cov: np.ndarray
    k_star: int = Field(..., ge=1)
    reduction: ReductionConfig
    mode_count_exact: int

    @model_validator(mode="after")
    def _check(self) -> "ResidualModel":
        p = self.mixture.dim
        if self.overall_mean.shape != (p,) or self.overall_cov.shape != (p, p):
            raise StructuralError("overall_cov", f"moments do not match mixture dimension {p}")
        try:
            np.linalg.cholesky(self.overall_cov)
        except np.linalg.LinAlgError as e:
            raise StructuralError("overall_cov", "residual covariance is not positive definite") from e
        return self

    @property
    def p(self) -> int:
        return self.mixture.dim

    @property
    def mode_count(self) -> int:
        return self.mixture.size

    def to_document(self) -> Dict[str, Any]:
        doc = self.mixture.to_document()
        doc.update(
            {
                "k_star": self.k_star,
                "reduction": self.reduction.model_dump(),
                "mode_count_exact": self.mode_count_exact,
                "overall_mean": self.overall_mean.tolist(),
                "overall_cov": self.overall_cov.tolist(),
            }
        )
        return doc

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "ResidualModel":
        try:
            return cls(
                mixture=Gmm.from_document(doc, normalize=False),
                overall_mean=np.asarray(doc["overall_mean"], dtype=float),
                overall_cov=np.asarray(doc["overall_cov"], dtype=float),
                k_star=doc["k_star"],
                reduction=ReductionConfig(**doc["reduction"]),
                mode_count_exact=doc["mode_count_exact"],
            )
        except KeyError as e:
            raise ConfigError(f"residual model document is missing {e}") from e


class EquivalentNoise(BaseModel):
    """
    Per-mode Gaussian measurement noises N(a_j, C_j) that reproduce each
    residual mode on their own
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    E: np.ndarray
    condition_number: float
    means: List[np.ndarray]
    covs: List[np.ndarray]
    literal_covs: List[np.ndarray]
