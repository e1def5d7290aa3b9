from typing import Any, Dict, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.utils.arrays import as_array
from src.utils.errors import StructuralError


class LtiSystem(BaseModel):
    """
    Plant x+ = Fx + Gu + v, y = Cx + eta observed by the Luenberger
    estimator x_hat+ = F x_hat + Gu + L(y - C x_hat)
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    F: np.ndarray
    G: np.ndarray
    C: np.ndarray
    L: np.ndarray

    @field_validator("F", "G", "C", "L", mode="before")
    @classmethod
    def _coerce(cls, value: Any, info) -> np.ndarray:
        return as_array(value, info.field_name, ndim=2)

    @model_validator(mode="after")
    def _check_dimensions(self) -> "LtiSystem":
        n = self.F.shape[0]
        if self.F.shape != (n, n) or n == 0:
            raise StructuralError("F", f"must be square and non-empty, got {self.F.shape}")
        if self.C.shape[1] != n or self.C.shape[0] == 0:
            raise StructuralError("C", f"must be p x {n}, got {self.C.shape}")
        p = self.C.shape[0]
        if self.L.shape != (n, p):
            raise StructuralError("L", f"must be {n} x {p}, got {self.L.shape}")
        if self.G.shape[0] != n or self.G.shape[1] == 0:
            raise StructuralError("G", f"must be {n} x m, got {self.G.shape}")
        return self

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[1]

    @property
    def closed_loop(self) -> np.ndarray:
        """Estimation-error dynamics F - LC"""
        return self.F - self.L @ self.C

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "LtiSystem":
        """
        Build from {"F": [[..]], "G": [[..]], "C": [[..]], "L": [[..]]}

        G is optional; the analytic pipeline never reads it.
        """
        if not isinstance(doc, dict):
            raise StructuralError("system", "document must be a JSON object")
        for field in ("F", "C", "L"):
            if field not in doc:
                raise StructuralError(field, "missing from system document")
        G = doc.get("G")
        if G is None:
            F = as_array(doc["F"], "F", ndim=2)
            G = np.zeros((F.shape[0], 1))
        return cls(F=doc["F"], G=G, C=doc["C"], L=doc["L"])

    def to_document(self) -> Dict[str, List[List[float]]]:
        return {
            "F": self.F.tolist(),
            "G": self.G.tolist(),
            "C": self.C.tolist(),
            "L": self.L.tolist(),
        }


class StabilityReport(BaseModel):
    spectral_radius: float
    eigenvalue_real: float
    eigenvalue_imag: float
    stable: bool

    @property
    def dominant_eigenvalue(self) -> complex:
        return complex(self.eigenvalue_real, self.eigenvalue_imag)


class ResidualWeights(BaseModel):
    """Coefficients of r_k = sum A_kappa eta + sum B_kappa v"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    horizon: int = Field(..., ge=1)
    A: List[np.ndarray]
    B: List[np.ndarray]

    @model_validator(mode="after")
    def _check_lengths(self) -> "ResidualWeights":
        if len(self.A) != self.horizon or len(self.B) != self.horizon - 1:
            raise StructuralError(
                "ResidualWeights", f"horizon {self.horizon} needs {self.horizon} A and {self.horizon - 1} B matrices"
            )
        return self

    def truncated(self, k: int) -> "ResidualWeights":
        return ResidualWeights(horizon=k, A=self.A[:k], B=self.B[: k - 1])


class SimTrace(BaseModel):
    """Recorded trajectory, one row per time step"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    states: np.ndarray
    estimates: np.ndarray
    outputs: np.ndarray
    residuals: np.ndarray
    inputs: np.ndarray

    @property
    def errors(self) -> np.ndarray:
        return self.states - self.estimates

    @property
    def steps(self) -> int:
        return self.states.shape[0]
