"""Application settings and configuration."""

from collections.abc import Iterator
from contextlib import contextmanager
from functools import lru_cache
from typing import Any, Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Laboratory settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="KORNLAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    app_name: str = "Korn Lab"
    app_version: str = "0.1.0"
    environment: Literal["development", "ci", "production"] = "development"

    # Numerics
    deterministic_sum: bool = False
    cg_tol: float = Field(default=1e-12, gt=0)
    cg_max_iter: int = Field(default=20000, gt=0)
    eig_tol: float = Field(default=1e-10, gt=0)
    eig_residual_tol: float = Field(default=1e-7, gt=0)
    eig_max_iter: int = Field(default=5000, gt=0)
    precond_degree_max: int = Field(default=64, gt=0)
    chain_tol: float = Field(default=1e-8, gt=0)
    dense_dof_limit: int = Field(default=4000, gt=0)
    kernel_threshold: float = Field(default=1e-8, gt=0)
    gap_ratio_min: float = Field(default=10.0, gt=0)
    power_iter_steps: int = 200
    eigen_seed: int = 20240611

    # Output
    output_dir: str = "./runs"

    # Logging
    log_level: str = "INFO"


@lru_cache
def get_settings() -> Settings:
    """Get cached laboratory settings."""
    return Settings()


@contextmanager
def overridden_settings(**values: Any) -> Iterator[Settings]:
    """Replace fields of the cached settings for the duration of the block."""
    settings = get_settings()
    previous = {name: getattr(settings, name) for name in values}
    for name, value in values.items():
        setattr(settings, name, value)
    try:
        yield settings
    finally:
        for name, value in previous.items():
            setattr(settings, name, value)
