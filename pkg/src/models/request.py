from pathlib import Path
from typing import Any, Dict, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.utils.errors import ConfigError
from src.utils.io import read_json


class NoiseSource(BaseModel):
    """A noise distribution given either as a GMM document or as samples to fit"""

    model_config = ConfigDict(extra="forbid")

    gmm: Path | None = Field(None, description="GMM JSON document")
    samples: Path | None = Field(None, description="CSV of noise samples, one vector per row")
    mode_count: int | None = Field(None, ge=1, description="Modes to fit when samples are given")
    seed: int = Field(0, description="EM initialisation seed")

    @model_validator(mode="after")
    def _exactly_one(self) -> "NoiseSource":
        if (self.gmm is None) == (self.samples is None):
            raise ValueError("exactly one of gmm or samples is required")
        if self.samples is not None and self.mode_count is None:
            raise ValueError("mode_count is required with samples")
        return self

    def resolved(self, base: Path) -> "NoiseSource":
        return self.model_copy(
            update={
                "gmm": base / self.gmm if self.gmm is not None else None,
                "samples": base / self.samples if self.samples is not None else None,
            }
        )


class ReductionSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d_mu: float = Field(0.0, ge=0)
    d_K: float = Field(0.0, ge=0)
    moment_match: bool = True


class MonteCarloSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    N: int = Field(1_000_000, ge=1, description="Post-burn-in samples")
    burn_in: int | None = Field(None, ge=0, description="Defaults to mc_burn_in_factor * k_star")
    seed: int = 0
    batches: int = Field(1, ge=1)


class JobConfig(BaseModel):
    """One CLI job; relative paths resolve against the config file's directory"""

    model_config = ConfigDict(extra="forbid")

    system: Path
    noise_eta: NoiseSource
    noise_v: NoiseSource | None = Field(None, description="Absent means no system noise")
    tail_tol: float | None = Field(None, gt=0)
    k_star: int | None = Field(None, ge=1, description="Overrides the horizon chosen from tail_tol")
    reduction: ReductionSettings | Literal["auto"] | None = None

    alpha: float | None = Field(None, gt=0)
    target_rate: float | None = Field(None, gt=0, lt=1)
    mc: MonteCarloSettings | None = None
    cdf_points: int = Field(50, ge=2)

    steps: int = Field(1000, ge=1, description="Trajectory length for simulate")
    seed: int = 0

    def resolved(self, base: Path) -> "JobConfig":
        return self.model_copy(
            update={
                "system": base / self.system,
                "noise_eta": self.noise_eta.resolved(base),
                "noise_v": self.noise_v.resolved(base) if self.noise_v is not None else None,
            }
        )

    @classmethod
    def from_document(cls, doc: Dict[str, Any], base: Path) -> "JobConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config: expected a JSON object")
        try:
            return cls.model_validate(doc).resolved(base)
        except ValidationError as e:
            raise config_error(e) from e

    @classmethod
    def load(cls, path: Path) -> "JobConfig":
        path = Path(path)
        return cls.from_document(read_json(path), path.parent)

    def with_overrides(
        self,
        seed: int | None = None,
        tail_tol: float | None = None,
        mc: bool = False,
    ) -> "JobConfig":
        """Apply --seed, --tail-tol and --mc; --seed also seeds the Monte-Carlo run"""
        update: Dict[str, Any] = {}
        if tail_tol is not None:
            if tail_tol <= 0:
                raise ConfigError("tail_tol: must be positive")
            update["tail_tol"] = tail_tol
            update["k_star"] = None
        mc_settings = self.mc if self.mc is not None else (MonteCarloSettings() if mc else None)
        if seed is not None:
            update["seed"] = seed
            if mc_settings is not None:
                mc_settings = mc_settings.model_copy(update={"seed": seed})
        update["mc"] = mc_settings
        return self.model_copy(update=update)


def config_error(e: ValidationError) -> ConfigError:
    """First validation failure as a ConfigError naming its field path"""
    first = e.errors()[0]
    field = ".".join(str(part) for part in first["loc"]) or "<root>"
    return ConfigError(f"{field}: {first['msg']}")
