from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field


class Settings(BaseSettings):

    log_level: str = "INFO"
    log_format: str = Field(default="console", description="console or json")

    # LTI core
    tail_tol: float = Field(default=1e-6, gt=0, description="Settling-horizon tail tolerance")
    max_horizon: int = 2000
    lyapunov_tol: float = 1e-10

    # Mixture algebra
    weight_tol: float = 1e-10
    weight_renormalize_tol: float = 1e-3
    psd_tol: float = 1e-12
    exact_mode_guard: int = 1_000_000

    # Quadrature
    quadrature_initial_order: int = 8
    quadrature_tol: float = 1e-8
    quadrature_max_doublings: int = 12
    quadrature_max_points: int = 2**22
    qmc_points: int = 2**20
    qmc_replicates: int = 4

    # Threshold search
    bisection_rate_tol: float = 1e-4
    bisection_width_tol: float = 1e-10
    bisection_max_steps: int = 200

    # EM fitting
    em_tol: float = 1e-8
    em_max_iter: int = 500
    em_reg_covar: float = 1e-9
    em_min_weight: float = 1e-8

    # Monte-Carlo oracle
    mc_block_size: int = Field(default=2**16, ge=1, description="Steps per seeded noise block")
    ks_bins: int = 4096
    mc_burn_in_factor: int = 5
    histogram_bins: int = 200
    histogram_span: float = 8.0

    workers: int = Field(default=1, ge=1, description="Thread pool size for mode and batch work")

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

settings = Settings()
