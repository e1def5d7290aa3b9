from typing import Any, Dict, List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.utils.errors import StructuralError

QuadratureMethod = Literal["closed-form-1d", "polar-2d", "spherical-3d", "qmc"]


class TuningReport(BaseModel):
    """False-alarm rate of a chi-squared detector against a residual mixture"""

    # per-mode thresholds are +inf when a mode mass is exactly one
    model_config = ConfigDict(ser_json_inf_nan="constants")

    alpha: float = Field(..., gt=0, description="Detector threshold")
    mode_weights: List[float] = Field(..., description="Residual mode weights pi_j")
    mode_masses: List[float] = Field(..., description="Sub-threshold mass M_j of each mode")
    false_alarm: float = Field(..., ge=0, le=1, description="1 - sum pi_j M_j")
    per_mode_alphas: List[float] = Field(default_factory=list)
    quadrature_error_estimate: float = Field(0.0, ge=0)
    method: QuadratureMethod
    unconverged_modes: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> "TuningReport":
        if len(self.mode_weights) != len(self.mode_masses):
            raise StructuralError("mode_masses", "one mass per mode weight is required")
        masses = np.asarray(self.mode_masses)
        if np.any((masses < 0) | (masses > 1)):
            raise StructuralError("mode_masses", "mode masses must lie in [0, 1]")
        identity = 1.0 - float(np.dot(self.mode_weights, masses))
        if abs(identity - self.false_alarm) > 1e-12:
            raise StructuralError("false_alarm", f"{self.false_alarm} != 1 - sum pi_j M_j = {identity}")
        return self

    @property
    def per_mode_rates(self) -> List[float]:
        return [1.0 - m for m in self.mode_masses]


class EmpiricalSummary(BaseModel):
    """Monte-Carlo residual statistics at a fixed threshold"""

    sample_count: int = Field(..., ge=0)
    alarm_count: int = Field(..., ge=0)
    alarm_rate: float = Field(..., ge=0, le=1)
    alpha: float
    empirical_mean: List[float]
    empirical_cov: List[List[float]]
    ks_distance: float | None = Field(None, ge=0, le=1)
    bin_edges: List[float] = Field(default_factory=list)
    histogram: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> "EmpiricalSummary":
        if self.alarm_count > self.sample_count:
            raise StructuralError("alarm_count", "more alarms than samples")
        if self.histogram:
            if len(self.bin_edges) != len(self.histogram) + 1:
                raise StructuralError("bin_edges", "expected one more edge than bins")
            if sum(self.histogram) != self.sample_count:
                raise StructuralError("histogram", "counts must sum to sample_count")
        return self

    @property
    def standard_error(self) -> float:
        if self.sample_count == 0:
            return 0.0
        return float(np.sqrt(self.alarm_rate * (1 - self.alarm_rate) / self.sample_count))


class RunReport(BaseModel):
    """Contents of tuning_report.json"""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    command: Literal["tune", "evaluate"]
    target_rate: float | None = None
    k_star: int
    mode_count_exact: int
    mode_count_reduced: int
    reduction: Dict[str, Any]
    tuning: TuningReport
    empirical: EmpiricalSummary | None = None
    analytic_minus_empirical: float | None = None


class CommandOutcome(BaseModel):
    """What a subcommand produced; files are written only from a successful outcome"""

    command: str
    success: bool
    exit_code: int = 0
    error: str | None = None
    outputs: List[str] = Field(default_factory=list)
    execution_time_ms: int = 0
