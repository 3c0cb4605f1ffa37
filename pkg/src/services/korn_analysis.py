"""Korn's first inequality, the main-lemma proof chain and norm equivalence.

All ratio reports define 0/0 as 0 and set ``zero_field``.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from src.config.settings import get_settings
from src.services.decomposition import helmholtz_decompose_tensor
from src.services.diff_ops import (
    curl_operator_bound,
    delta_array,
    project_free,
    tensor_curl,
    tensor_grad,
)
from src.services.grid_fields import (
    BCMode,
    FieldSpace,
    TensorField,
    VectorField,
    sym_part,
)
from src.services.snapshots import dump_counterexample
from src.services.spectral_constants import ConstantsRecord, HarmonicReport, SharpConstantResult
from src.utils.error_handler import (
    IncompatibleFieldsError,
    InvariantViolationError,
    TopologyError,
)

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


class KornMode(str, Enum):
    """Boundary hypothesis of a Korn check."""
    DIRICHLET = "dirichlet"
    TANGENTIAL_VARIANT = "tangential_variant"


def _ratio(numerator: float, denominator: float) -> tuple[float, bool]:
    if denominator == 0.0:
        return (0.0, True) if numerator == 0.0 else (math.inf, False)
    return numerator / denominator, False


def divergence_norm(v: VectorField) -> float:
    """‖div v‖ with the backward (adjoint) divergence of the 1-form (v_1, ..., v_N)."""
    mask = v.mask
    div = delta_array(v.scalars, mask.N, 1, mask.h)
    return math.sqrt(mask.cell_volume * float(np.sum(div**2)))


@dataclass
class KornReport:
    """‖Grad v‖ / ‖sym Grad v‖ together with the Korn identity residual."""

    mode: KornMode
    grad_norm: float
    sym_norm: float
    div_norm: float
    ratio: float
    identity_residual: float
    bound: float
    zero_field: bool = False

    @property
    def passed(self) -> bool:
        return self.ratio <= self.bound + 1e-10


def _boundary_constants(v: VectorField) -> np.ndarray:
    """Per-row constant taken on the boundary vertices; rejects non-constant data."""
    boundary = v.mask.boundary
    constants = np.empty(v.mask.N)
    for n, scalar in enumerate(v.scalars):
        values = scalar[boundary]
        spread = float(values.max() - values.min())
        if spread > 1e-12 * max(1.0, float(np.abs(values).max())):
            raise IncompatibleFieldsError(
                f"Row {n + 1} is not constant on the boundary (spread {spread:.3e})",
                details={"row": n + 1},
            )
        constants[n] = float(values[0])
    return constants


def shift_to_dirichlet(v: VectorField) -> tuple[VectorField, np.ndarray]:
    """Subtract the boundary constants of each row on the inside vertices.

    Reading v as extended by those constants outside the domain, Grad v is
    unchanged by the shift.
    """
    mask = v.mask
    if mask.boundary_components != 1:
        raise TopologyError(mask.boundary_components)
    constants = _boundary_constants(v)
    inside = mask.inside
    shifted = v.scalars - constants[(slice(None),) + (np.newaxis,) * mask.N]
    values = np.where(inside[np.newaxis], shifted, 0.0)[:, np.newaxis]
    # for 0-forms the tangential space is "zero on every boundary vertex"
    return VectorField(mask, values, BCMode.TANGENTIAL), constants


def korn_check(
    v: VectorField,
    mode: KornMode | str = KornMode.DIRICHLET,
    c_hat: float | None = None,
) -> KornReport:
    """Korn ratio and the identity 2‖sym Grad v‖² = ‖Grad v‖² + ‖div v‖².

    In the tangential variant each row must be constant on a connected
    boundary; the ratio is bounded by ``c_hat`` when given, else by √2.
    """
    mode = KornMode(mode)
    if mode == KornMode.DIRICHLET:
        if not v.respects_bc(BCMode.FULL_DIRICHLET):
            raise IncompatibleFieldsError("Dirichlet Korn check needs a full_dirichlet vector field")
        w = v
        bound = SQRT2
    else:
        w, _ = shift_to_dirichlet(v)
        bound = c_hat if c_hat is not None else SQRT2

    grad = tensor_grad(w)
    grad_norm = grad.norm()
    sym_norm = sym_part(grad).norm()
    div_norm = divergence_norm(w)
    ratio, zero_field = _ratio(grad_norm, sym_norm)
    if math.isinf(ratio):
        raise InvariantViolationError(
            "sym Grad v vanishes while Grad v does not",
            details={"grad_norm": grad_norm, "mode": mode.value},
        )
    scale = grad_norm**2 if grad_norm > 0.0 else 1.0
    residual = abs(2.0 * sym_norm**2 - grad_norm**2 - div_norm**2) / scale
    return KornReport(mode, grad_norm, sym_norm, div_norm, ratio, residual, bound, zero_field)


@dataclass
class AssertionOutcome:
    """One inequality of the proof chain, lhs ≤ rhs."""

    name: str
    lhs: float
    rhs: float
    passed: bool

    @property
    def ratio(self) -> float:
        return _ratio(self.lhs, self.rhs)[0]


@dataclass
class ChainReport:
    """Intermediate quantities and assertion outcomes of the main-lemma chain."""

    assertions: list[AssertionOutcome]
    norms: dict[str, float]
    final_ratio: float
    hypothesis_met: bool
    zero_field: bool = False
    harmonic_fraction: float | None = None
    counterexample_path: str | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    @property
    def violations(self) -> list[str]:
        """Failed assertions that count: none when the connected-boundary hypothesis fails."""
        if not self.hypothesis_met:
            return []
        return [a.name for a in self.assertions if not a.passed]

    def ratios(self) -> dict[str, float]:
        return {a.name: a.ratio for a in self.assertions}


def _rowwise_coderivative_norm(s: TensorField) -> float:
    mask = s.mask
    weak = project_free(delta_array(s.values, mask.N, 1, mask.h), mask, 0, BCMode.FULL_DIRICHLET)
    return math.sqrt(mask.cell_volume * float(np.sum(weak**2)))


def _harmonic_fraction(s: TensorField, harmonic: HarmonicReport) -> float:
    """‖projection of the rows of S onto harmonic Dirichlet 1-forms‖ / ‖S‖."""
    norm = s.norm()
    if norm == 0.0 or harmonic.dimension == 0:
        return 0.0
    space = FieldSpace(s.mask, 1, BCMode.CELLULAR)
    coefficients = np.stack([harmonic.basis.T @ space.pack(row) for row in s.values])
    return math.sqrt(s.mask.cell_volume * float(np.sum(coefficients**2))) / norm


def main_lemma_chain(
    t: TensorField,
    constants: ConstantsRecord,
    tol: float | None = None,
    harmonic: HarmonicReport | None = None,
    dump_dir: str | Path | None = None,
    tag: str = "",
    cg_tol: float | None = None,
) -> ChainReport:
    """Run the proof of ‖T‖ ≤ ĉ(‖sym T‖² + ‖Curl T‖²)^{1/2} step by step on one field.

    Assertions: Curl S = Curl T; ‖S‖ ≤ c_m(‖Curl S‖² + ‖δS‖²)^{1/2};
    ‖Grad v‖² ≤ 2‖sym Grad v‖²; ‖T‖² ≤ 4‖sym T‖² + 5‖S‖²; the main inequality.
    """
    settings = get_settings()
    tol = settings.chain_tol if tol is None else tol
    mask = t.mask
    hypothesis_met = mask.boundary_components == 1

    t_norm = t.norm()
    if t_norm == 0.0:
        zero = [
            AssertionOutcome(name, 0.0, 0.0, True)
            for name in ("curl_invariance", "maxwell_estimate", "korn", "split_bound", "main_inequality")
        ]
        return ChainReport(zero, {"T": 0.0}, 0.0, hypothesis_met, zero_field=True)

    decomposition = helmholtz_decompose_tensor(t, cg_tol)
    gradient, s = decomposition.gradient, decomposition.solenoidal
    curl_t = tensor_curl(t)
    curl_s = tensor_curl(s)

    curl_t_norm = curl_t.norm()
    curl_s_norm = curl_s.norm()
    curl_gap = math.sqrt(mask.cell_volume * float(np.sum((curl_s.values - curl_t.values) ** 2)))
    s_norm = s.norm()
    delta_defect = _rowwise_coderivative_norm(s)
    grad_norm = gradient.norm()
    sym_grad_norm = sym_part(gradient).norm()
    sym_t_norm = sym_part(t).norm()
    seminorm = math.sqrt(sym_t_norm**2 + curl_t_norm**2)
    c_m, c_hat = constants.c_m, constants.c_hat
    t_sq = t_norm**2

    maxwell_rhs = c_m * math.sqrt(curl_s_norm**2 + delta_defect**2)
    curl_tol = tol * max(curl_t_norm, t_norm / mask.h)
    assertions = [
        AssertionOutcome("curl_invariance", curl_gap, curl_tol, curl_gap <= curl_tol),
        AssertionOutcome("maxwell_estimate", s_norm, maxwell_rhs, s_norm <= maxwell_rhs + tol * t_norm),
        AssertionOutcome(
            "korn", grad_norm**2, 2.0 * sym_grad_norm**2, grad_norm**2 <= 2.0 * sym_grad_norm**2 + tol * t_sq
        ),
        AssertionOutcome(
            "split_bound",
            t_sq,
            4.0 * sym_t_norm**2 + 5.0 * s_norm**2,
            t_sq <= 4.0 * sym_t_norm**2 + 5.0 * s_norm**2 + tol * t_sq,
        ),
        AssertionOutcome("main_inequality", t_norm, c_hat * seminorm, t_norm <= c_hat * seminorm * (1.0 + tol)),
    ]
    final_ratio = _ratio(t_norm, c_hat * seminorm)[0]

    report = ChainReport(
        assertions=assertions,
        norms={
            "T": t_norm,
            "sym_T": sym_t_norm,
            "curl_T": curl_t_norm,
            "grad_v": grad_norm,
            "sym_grad_v": sym_grad_norm,
            "S": s_norm,
            "delta_S": delta_defect,
            "orthogonality": decomposition.orthogonality_defect,
            "pythagoras": decomposition.pythagoras_defect,
        },
        final_ratio=final_ratio,
        hypothesis_met=hypothesis_met,
    )
    if harmonic is not None:
        report.harmonic_fraction = _harmonic_fraction(s, harmonic)
    if not hypothesis_met:
        report.notes.append(
            f"boundary has {mask.boundary_components} components; failures are not violations"
        )
    if not s.respects_bc(BCMode.CELLULAR):
        report.notes.append("rows of S leave the cellular space on which c_m is computed")

    if report.violations:
        logger.error(
            f"Main-lemma chain failed: {report.violations}",
            extra={"ratios": report.ratios(), "mask": mask.descriptor()},
        )
        if dump_dir is not None:
            path = dump_counterexample(
                t, report.violations[0], report.ratios(), constants.to_dict(), dump_dir, tag
            )
            report.counterexample_path = str(path)
    return report


@dataclass
class SharpCheck:
    """Comparison of the sharp discrete constant with ĉ."""

    c_sharp: float
    c_hat: float
    test_quotient: float
    passed: bool
    hypothesis_met: bool

    @property
    def gap(self) -> float:
        """c_hat / c_sharp."""
        return self.c_hat / self.c_sharp


def check_sharp_constant(
    sharp: SharpConstantResult, constants: ConstantsRecord, tol: float | None = None
) -> SharpCheck:
    """c_sharp ≤ ĉ + tol and λ_min no larger than the curl-free test quotient."""
    tol = get_settings().chain_tol if tol is None else tol
    passed = sharp.c_sharp <= constants.c_hat + tol
    if not math.isnan(sharp.test_quotient):
        passed = passed and sharp.eigenvalue <= sharp.test_quotient + tol
    return SharpCheck(
        c_sharp=sharp.c_sharp,
        c_hat=constants.c_hat,
        test_quotient=sharp.test_quotient,
        passed=passed,
        hypothesis_met=constants.connected_boundary,
    )


@dataclass
class NormEquivalenceReport:
    """(1/ĉ)‖T‖ ≤ (‖sym T‖² + ‖Curl T‖²)^{1/2} ≤ √(1 + C_curl²)‖T‖."""

    norm: float
    seminorm: float
    lower: float
    upper: float
    lower_holds: bool
    upper_holds: bool

    @property
    def passed(self) -> bool:
        return self.lower_holds and self.upper_holds


def norm_equivalence_check(t: TensorField, c_hat: float, tol: float | None = None) -> NormEquivalenceReport:
    """Both directions of the norm equivalence on one tensor field."""
    tol = get_settings().chain_tol if tol is None else tol
    mask = t.mask
    norm = t.norm()
    seminorm = math.sqrt(sym_part(t).norm() ** 2 + tensor_curl(t).norm() ** 2)
    c_curl = curl_operator_bound(mask.N, mask.h)
    lower = norm / c_hat
    upper = math.sqrt(1.0 + c_curl**2) * norm
    return NormEquivalenceReport(
        norm=norm,
        seminorm=seminorm,
        lower=lower,
        upper=upper,
        lower_holds=lower <= seminorm * (1.0 + tol),
        upper_holds=seminorm <= upper * (1.0 + tol),
    )


def describe_chain(report: ChainReport) -> dict[str, Any]:
    """Flat dictionary of a chain report for tables and logs."""
    data: dict[str, Any] = {f"ratio_{k}": v for k, v in report.ratios().items()}
    data.update(
        final_ratio=report.final_ratio,
        passed=report.passed,
        hypothesis_met=report.hypothesis_met,
        zero_field=report.zero_field,
    )
    return data
