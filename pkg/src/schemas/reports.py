"""Run report schemas and their JSON/CSV serialisation.

CSV column orders are fixed per campaign and versioned through
``REPORT_SCHEMA_VERSION``; JSON carries the same table under ``rows``.
"""

import json
import math
from pathlib import Path
from typing import Any, Literal

import pandas as pd
from pydantic import BaseModel, Field, model_validator

REPORT_SCHEMA_VERSION = "1"

CONSTANTS_COLUMNS = [
    "resolution",
    "h",
    "c_p",
    "c_m",
    "c_hat",
    "c_sharp",
    "dim_H1",
    "gap_ratio_q0",
    "gap_ratio_q1",
    "boundary_components",
    "flagged",
]
VERIFY_COLUMNS = [
    "resolution",
    "seed",
    "family",
    "final_ratio",
    "ratio_curl_invariance",
    "ratio_maxwell_estimate",
    "ratio_korn",
    "ratio_split_bound",
    "ratio_main_inequality",
    "passed",
    "hypothesis_met",
]
KORN_COLUMNS = ["resolution", "seed", "mode", "ratio", "identity_residual", "bound", "passed", "zero_field"]
BETTI_COLUMNS = ["domain", "N", "resolution", "q", "dimension", "gap_ratio", "reliable", "boundary_components"]
CONVERGENCE_COLUMNS = ["constant", "resolutions", "values", "extrapolated", "order", "relative_change", "converged"]


def finite_or_none(value: float | None) -> float | None:
    """Map inf/nan to None so tables stay valid JSON."""
    if value is None or not math.isfinite(value):
        return None
    return float(value)


class ConstantsRow(BaseModel):
    """Constants at one resolution."""

    resolution: int
    h: float
    c_p: float
    c_m: float
    c_hat: float
    c_sharp: float | None = None
    dim_H1: int  # noqa: N815
    harmonic_dims: dict[str, int] = Field(default_factory=dict)
    gap_ratios: dict[str, float | None] = Field(default_factory=dict)
    boundary_components: int
    flagged: bool = False

    def table_row(self) -> dict[str, Any]:
        row = self.model_dump()
        row["gap_ratio_q0"] = self.gap_ratios.get("0")
        row["gap_ratio_q1"] = self.gap_ratios.get("1")
        return {column: row[column] for column in CONSTANTS_COLUMNS}


class CheckTally(BaseModel):
    """Pass/fail counts of one family of checks."""

    name: str
    executed: int = 0
    passed: int = 0
    failed: int = 0
    skipped: int = 0
    worst_ratio: float | None = None

    @model_validator(mode="after")
    def validate_totals(self) -> "CheckTally":
        if self.passed + self.failed + self.skipped != self.executed:
            raise ValueError("pass/fail/skip totals must equal the number of executed checks")
        return self

    def record(self, passed: bool | None, ratio: float | None = None) -> None:
        """Count one outcome; ``passed=None`` marks a check whose hypothesis does not hold."""
        self.executed += 1
        if passed is None:
            self.skipped += 1
        elif passed:
            self.passed += 1
        else:
            self.failed += 1
        ratio = finite_or_none(ratio)
        if ratio is not None and (self.worst_ratio is None or ratio > self.worst_ratio):
            self.worst_ratio = ratio


class ConvergenceRow(BaseModel):
    """Sweep of one constant with its extrapolated limit."""

    constant: str
    resolutions: list[int]
    values: list[float]
    extrapolated: float | None = None
    order: float | None = None
    relative_change: float | None = None
    converged: bool = False

    def table_row(self) -> dict[str, Any]:
        row = self.model_dump()
        row["resolutions"] = " ".join(str(r) for r in self.resolutions)
        row["values"] = " ".join(repr(v) for v in self.values)
        return {column: row[column] for column in CONVERGENCE_COLUMNS}


class RunReport(BaseModel):
    """Outcome of one campaign."""

    command: Literal["constants", "verify", "korn", "betti", "convergence"]
    tool_version: str
    schema_version: str = REPORT_SCHEMA_VERSION
    config: dict[str, Any]
    constants: list[ConstantsRow] = Field(default_factory=list)
    checks: list[CheckTally] = Field(default_factory=list)
    convergence: list[ConvergenceRow] = Field(default_factory=list)
    columns: list[str] = Field(default_factory=list)
    rows: list[dict[str, Any]] = Field(default_factory=list)
    counterexamples: list[str] = Field(default_factory=list)
    notes: list[str] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)
    timings: dict[str, float] | None = None
    exit_code: int = 0

    @property
    def violations(self) -> int:
        return sum(check.failed for check in self.checks)

    def check(self, name: str) -> CheckTally:
        """Tally ``name``, created on first use."""
        for tally in self.checks:
            if tally.name == name:
                return tally
        tally = CheckTally(name=name)
        self.checks.append(tally)
        return tally

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=self.columns)

    def to_csv(self) -> str:
        return str(self.to_frame().to_csv(index=False, float_format="%.12g", lineterminator="\n"))

    def write(self, path: str | Path, fmt: Literal["csv", "json"] = "json") -> Path:
        """Write the report; the suffix follows ``fmt``."""
        path = Path(path).with_suffix(f".{fmt}")
        path.parent.mkdir(parents=True, exist_ok=True)
        text = self.to_csv() if fmt == "csv" else self.to_json()
        path.write_text(text, encoding="utf-8")
        return path
