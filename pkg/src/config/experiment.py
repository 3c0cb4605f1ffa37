"""Experiment configuration: a TOML file with nested sections plus flag overrides."""

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from src.config.settings import get_settings
from src.services.grid_fields import BCMode, DomainKind
from src.utils.error_handler import ConfigurationError

logger = logging.getLogger(__name__)


def _settings_default(name: str) -> Any:
    return lambda: getattr(get_settings(), name)


class DomainSection(BaseModel):
    """Domain kind, geometry and the dyadic resolution sweep."""

    kind: DomainKind = DomainKind.BOX
    dimension: int = Field(default=2, ge=1, le=6)
    extent: float = Field(default=1.0, gt=0, description="Side length of the grid box")
    geometry: dict[str, Any] = Field(default_factory=dict)
    resolutions: list[int] = Field(default_factory=lambda: [17])

    @field_validator("resolutions")
    @classmethod
    def validate_resolutions(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("at least one resolution is required")
        if any(n < 3 for n in v):
            raise ValueError("resolutions must be >= 3 vertices per axis")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("resolutions must be strictly increasing")
        return v

    def spacing(self, resolution: int) -> float:
        return self.extent / (resolution - 1)


class ToleranceSection(BaseModel):
    """Solver and assertion tolerances."""

    cg_tol: float = Field(default_factory=_settings_default("cg_tol"), gt=0)
    eig_tol: float = Field(default_factory=_settings_default("eig_tol"), gt=0)
    chain_tol: float = Field(default_factory=_settings_default("chain_tol"), gt=0)


class OutputSection(BaseModel):
    """Where and how reports are written."""

    directory: str = Field(default_factory=_settings_default("output_dir"))
    format: Literal["csv", "json"] = "json"
    report_name: str = "report"
    dump_counterexamples: bool = True


class ExperimentConfig(BaseModel):
    """One campaign run."""

    domain: DomainSection = Field(default_factory=DomainSection)
    bc_mode: BCMode = BCMode.FULL_DIRICHLET
    seeds: list[int] = Field(default_factory=lambda: [0])
    seed_count: int | None = Field(default=None, gt=0)
    field_family: Literal["generic", "skew", "compatible"] = "generic"
    degrees: list[int] | None = None
    tolerances: ToleranceSection = Field(default_factory=ToleranceSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @field_validator("bc_mode", mode="before")
    @classmethod
    def normalise_bc_mode(cls, v: Any) -> Any:
        if v == "full":
            return BCMode.FULL_DIRICHLET
        if v in (BCMode.NONE, BCMode.CELLULAR):
            raise ValueError("campaigns run in full_dirichlet or tangential mode")
        return v

    @model_validator(mode="after")
    def expand_seeds(self) -> "ExperimentConfig":
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.seed_count is not None:
            start = self.seeds[0]
            self.seeds = list(range(start, start + self.seed_count))
            self.seed_count = None
        if self.degrees is not None:
            n = self.domain.dimension
            bad = [q for q in self.degrees if not 0 <= q <= n]
            if bad:
                raise ValueError(f"degrees {bad} outside [0, {n}]")
        return self

    def echo(self) -> dict[str, Any]:
        """JSON-ready copy of the effective configuration."""
        return self.model_dump(mode="json")


def _deep_merge(base: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_experiment(
    path: str | Path | None = None, overrides: dict[str, Any] | None = None
) -> ExperimentConfig:
    """Read ``path`` (TOML) if given, apply ``overrides`` and validate.

    Raises ConfigurationError for unreadable files or invalid values.
    """
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            with path.open("rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError as e:
            raise ConfigurationError(f"Config file not found: {path}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigurationError(f"Invalid TOML in {path}: {e}") from e

    data = _deep_merge(data, overrides or {})
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(
            "Invalid experiment configuration",
            details={"errors": e.errors(include_url=False, include_context=False)},
        ) from e
    logger.debug("Loaded experiment configuration", extra={"config": config.echo()})
    return config
