"""Hodge-Helmholtz decomposition of forms and tensor fields.

E = dp + R with p in the degree-(q−1) BC space and R weakly coderivative-free.
The potential solves the Hodge Laplacian of degree q−1 with CG started at
zero; its right-hand side P δE is orthogonal to the harmonic forms, so the
iterates never pick up a kernel component.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from src.config.settings import get_settings
from src.services.diff_ops import bc_coderivative_array, exterior_derivative, tensor_grad
from src.services.grid_fields import (
    BCMode,
    FormField,
    TensorField,
    VectorField,
    inner_product,
)
from src.services.solvers import SolveReport, cg_solve
from src.services.spectral_constants import hodge_form_operator, spectral_mode
from src.utils.error_handler import DecompositionFailedError, DegreeError

logger = logging.getLogger(__name__)


@dataclass
class HodgeDecomposition:
    """E = exact + remainder with exact = d(potential)."""

    potential: FormField
    exact: FormField
    remainder: FormField
    report: SolveReport
    orthogonality_defect: float
    coderivative_defect: float

    @property
    def pythagoras_defect(self) -> float:
        """|‖dp‖² + ‖R‖² − ‖E‖²| / ‖E‖²."""
        total = self.exact + self.remainder
        norm_sq = inner_product(total, total)
        if norm_sq == 0.0:
            return 0.0
        parts = inner_product(self.exact, self.exact) + inner_product(self.remainder, self.remainder)
        return abs(parts - norm_sq) / norm_sq


def hodge_decompose(e: FormField, tol: float | None = None) -> HodgeDecomposition:
    """Split a degree-q form (1 ≤ q ≤ N) into d of a BC potential plus a coderivative-free rest."""
    settings = get_settings()
    tol = settings.cg_tol if tol is None else tol
    mask, q = e.mask, e.q
    if q < 1:
        raise DegreeError("Hodge decomposition needs degree q >= 1", details={"q": q})

    mode = spectral_mode(q - 1, BCMode.FULL_DIRICHLET)
    operator, space = hodge_form_operator(mask, q - 1, mode)
    # Dᵀ E restricted to the potential space is −P δE
    rhs = -space.pack(bc_coderivative_array(e.components, mask, q, mode))
    solution, report = cg_solve(operator, rhs, tol=tol)
    if not report.converged:
        raise DecompositionFailedError(
            f"Potential solve for degree {q} did not converge",
            details={"iterations": report.iterations, "residual": report.residual},
        )

    potential = FormField(mask, q - 1, space.unpack(solution), mode)
    exact = exterior_derivative(potential)
    remainder = FormField(mask, q, e.components - exact.components, BCMode.NONE)

    norm_sq = inner_product(e, e)
    scale = norm_sq if norm_sq > 0.0 else 1.0
    orthogonality = abs(inner_product(exact, remainder)) / scale
    weak_div = bc_coderivative_array(remainder.components, mask, q, mode)
    coderivative_defect = math.sqrt(mask.cell_volume * float(np.sum(weak_div**2))) / math.sqrt(scale)

    logger.debug(
        f"Hodge decomposition q={q}: {report.iterations} CG iterations",
        extra={"orthogonality": orthogonality, "coderivative_defect": coderivative_defect},
    )
    return HodgeDecomposition(potential, exact, remainder, report, orthogonality, coderivative_defect)


@dataclass
class DecompositionResult:
    """T = Grad v + S with v full_dirichlet and S weakly Div-free."""

    potential: VectorField
    gradient: TensorField
    solenoidal: TensorField
    orthogonality_defect: float
    reports: list[SolveReport] = field(default_factory=list)

    @property
    def pythagoras_defect(self) -> float:
        """|‖Grad v‖² + ‖S‖² − ‖T‖²| / ‖T‖²."""
        total = self.gradient + self.solenoidal
        norm_sq = inner_product(total, total)
        if norm_sq == 0.0:
            return 0.0
        parts = inner_product(self.gradient, self.gradient) + inner_product(
            self.solenoidal, self.solenoidal
        )
        return abs(parts - norm_sq) / norm_sq


def helmholtz_decompose_tensor(t: TensorField, tol: float | None = None) -> DecompositionResult:
    """Row-wise Hodge decomposition of a tensor field with S := T − Grad v."""
    if t.bc_mode != BCMode.FULL_DIRICHLET:
        logger.debug(f"Decomposing a {t.bc_mode.value} tensor outside the verification space")

    rows = [hodge_decompose(row, tol) for row in t.rows]
    potential = VectorField(
        t.mask,
        np.stack([r.potential.components for r in rows]),
        BCMode.FULL_DIRICHLET,
    )
    gradient = tensor_grad(potential)
    solenoidal = TensorField(t.mask, t.values - gradient.values, BCMode.NONE)

    norm_sq = inner_product(t, t)
    orthogonality = abs(inner_product(gradient, solenoidal)) / (norm_sq if norm_sq > 0.0 else 1.0)
    return DecompositionResult(
        potential=potential,
        gradient=gradient,
        solenoidal=solenoidal,
        orthogonality_defect=orthogonality,
        reports=[r.report for r in rows],
    )
