"""Poincaré and Maxwell constants, harmonic Dirichlet forms and the sharp tensor constant.

For q ≥ 1 every spectral problem is posed on the cellular subcomplex and
potentials vanish on the boundary in both modes. The quadratic form is
‖dE‖² + ‖P δE‖² on free-DOF vectors, whose kernel is the discrete space of
harmonic Dirichlet forms.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from src.config.settings import get_settings
from src.services.diff_ops import compatible_tensor, d_array, delta_array, project_free
from src.services.grid_fields import (
    BCMode,
    DomainMask,
    FieldSpace,
    TensorField,
)
from src.services.solvers import (
    EigenReport,
    LinearOperatorHandle,
    power_iteration,
    smallest_eigenpairs,
)
from src.utils.error_handler import DegreeError

logger = logging.getLogger(__name__)

# First batch size when counting the kernel cluster.
_INITIAL_BATCH = 4


def spectral_mode(q: int, bc_mode: BCMode) -> BCMode:
    """BC space on which degree-q spectral problems are posed.

    Potentials (q = 0) vanish on the boundary in both modes. For q ≥ 1 the
    problem lives on the cellular subcomplex, which is closed under d and
    lies inside the tangential space.
    """
    bc_mode = BCMode(bc_mode)
    if bc_mode == BCMode.NONE:
        raise DegreeError("Spectral problems need a boundary condition (full_dirichlet or tangential)")
    return BCMode.FULL_DIRICHLET if q == 0 else BCMode.CELLULAR


def tensor_mode(bc_mode: BCMode) -> BCMode:
    """BC space of the sharp-constant tensor problem."""
    bc_mode = BCMode(bc_mode)
    return BCMode.FULL_DIRICHLET if bc_mode == BCMode.FULL_DIRICHLET else BCMode.CELLULAR


def default_shift(mask: DomainMask) -> float:
    """Inverse squared extent of the grid: the scale of the smallest nonzero eigenvalues."""
    extent = max(mask.h * (n - 1) for n in mask.shape)
    return 1.0 / extent**2


def hodge_form_operator(
    mask: DomainMask, q: int, bc_mode: BCMode = BCMode.TANGENTIAL
) -> tuple[LinearOperatorHandle, FieldSpace]:
    """Operator of ‖dE‖² + ‖P δE‖² on the free DOFs of the degree-q BC space."""
    n = mask.N
    if not 0 <= q <= n:
        raise DegreeError(f"Degree {q} outside [0, {n}]", details={"N": n, "q": q})
    mode = spectral_mode(q, bc_mode)
    space = FieldSpace(mask, q, mode)

    def apply(x: np.ndarray) -> np.ndarray:
        e = space.unpack(x)
        out = np.zeros_like(e)
        if q < n:
            out -= delta_array(d_array(e, n, q, mask.h), n, q + 1, mask.h)
        if q > 0:
            coderivative = project_free(delta_array(e, n, q, mask.h), mask, q - 1, mode)
            out -= d_array(coderivative, n, q - 1, mask.h)
        return space.pack(out)

    return LinearOperatorHandle(apply, space.dim, name=f"hodge[q={q},{mode.value}]"), space


@dataclass
class HarmonicReport:
    """Kernel cluster of the degree-q Hodge form."""

    q: int
    dimension: int
    eigenvalues: list[float]
    threshold: float
    lambda_ref: float
    gap_ratio: float
    reliable: bool
    basis: np.ndarray = field(repr=False)
    warning: str | None = None
    converged: bool = True


def harmonic_dimension(
    mask: DomainMask,
    q: int,
    bc_mode: BCMode = BCMode.TANGENTIAL,
    tol: float | None = None,
) -> HarmonicReport:
    """Count eigenvalues below the kernel threshold 1e-8·λ_ref and report the spectral gap.

    The batch size doubles until an eigenvalue above the threshold is seen,
    so the gap ratio λ_m / max(λ_{m−1}, ε) is always measured.
    """
    settings = get_settings()
    operator, space = hodge_form_operator(mask, q, bc_mode)
    if space.dim == 0:
        return HarmonicReport(q, 0, [], 0.0, 0.0, math.inf, True, np.zeros((0, 0)))

    lambda_ref = power_iteration(operator)
    threshold = settings.kernel_threshold * lambda_ref
    shift = default_shift(mask)

    k = min(_INITIAL_BATCH, space.dim)
    while True:
        report = smallest_eigenpairs(operator, k, tol=tol, shift=shift)
        values = report.eigenvalues
        count = int(np.sum(values < threshold))
        if count < len(values) or k >= space.dim:
            break
        k = min(2 * k, space.dim)

    if count < len(values):
        gap_ratio = float(values[count] / max(values[count - 1] if count else 0.0, threshold))
    else:
        gap_ratio = math.inf
    reliable = gap_ratio >= settings.gap_ratio_min and report.converged
    warning = None
    if not reliable:
        warning = (
            f"Harmonic count {count} for q={q} is unreliable "
            f"(gap ratio {gap_ratio:.3g}, converged={report.converged})"
        )
        logger.warning(warning, extra={"q": q, "eigenvalues": values.tolist()})

    logger.info(
        f"dim H^{q}_D = {count} on {mask.kind.value} {mask.shape}",
        extra={"gap_ratio": gap_ratio, "threshold": threshold},
    )
    return HarmonicReport(
        q=q,
        dimension=count,
        eigenvalues=[float(v) for v in values],
        threshold=threshold,
        lambda_ref=lambda_ref,
        gap_ratio=gap_ratio,
        reliable=reliable,
        basis=report.eigenvectors[:, :count],
        warning=warning,
        converged=report.converged,
    )


@dataclass
class PoincareResult:
    """c_{p,q} with the eigen and harmonic reports behind it."""

    q: int
    constant: float
    eigenvalue: float
    eigen: EigenReport
    harmonic: HarmonicReport

    @property
    def flagged(self) -> bool:
        return not (self.eigen.converged and self.harmonic.reliable)


def poincare_q_constant(
    mask: DomainMask,
    q: int,
    bc_mode: BCMode = BCMode.FULL_DIRICHLET,
    tol: float | None = None,
    harmonic: HarmonicReport | None = None,
) -> PoincareResult:
    """c_{p,q} = λ_min^{-1/2} of the Hodge form on the complement of the harmonic forms."""
    if harmonic is None:
        harmonic = harmonic_dimension(mask, q, bc_mode, tol)
    operator, space = hodge_form_operator(mask, q, bc_mode)
    eigen = smallest_eigenpairs(
        operator,
        1,
        deflation=harmonic.basis if harmonic.dimension else None,
        tol=tol,
        shift=default_shift(mask),
    )
    if len(eigen.eigenvalues) == 0:
        raise DegreeError(
            f"Degree-{q} space has no room beyond its harmonic forms",
            details={"dim": space.dim, "harmonic": harmonic.dimension},
        )
    lam = eigen.smallest
    constant = 1.0 / math.sqrt(lam)
    logger.debug(f"c_p,{q} = {constant:.6f} (lambda_min {lam:.6e})")
    return PoincareResult(q, constant, lam, eigen, harmonic)


def c_hat_from(c_m: float) -> float:
    """max{2, √5·c_m}."""
    return max(2.0, math.sqrt(5.0) * c_m)


@dataclass
class ConstantsRecord:
    """Constants of one mask, resolution and BC mode."""

    c_p: float
    c_m: float
    c_hat: float
    harmonic_dims: dict[int, int]
    gap_ratios: dict[int, float]
    descriptor: dict[str, Any]
    resolution: list[int]
    h: float
    bc_mode: BCMode
    c_sharp: float | None = None
    flagged: bool = False
    converged: bool = True
    notes: list[str] = field(default_factory=list)

    @property
    def connected_boundary(self) -> bool:
        return int(self.descriptor.get("boundary_components", 0)) == 1

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["bc_mode"] = self.bc_mode.value
        data["harmonic_dims"] = {str(q): d for q, d in self.harmonic_dims.items()}
        data["gap_ratios"] = {str(q): g for q, g in self.gap_ratios.items()}
        return data


def compute_constants(
    mask: DomainMask,
    bc_mode: BCMode = BCMode.FULL_DIRICHLET,
    degrees: list[int] | None = None,
    tol: float | None = None,
) -> ConstantsRecord:
    """c_p, c_m, c_hat and harmonic dimensions; c_sharp is attached separately."""
    settings = get_settings()
    bc_mode = BCMode(bc_mode)
    degrees = sorted(set(degrees or []) | {0, 1})
    harmonics = {q: harmonic_dimension(mask, q, bc_mode, tol) for q in degrees}
    c_p = poincare_q_constant(mask, 0, bc_mode, tol, harmonic=harmonics[0])
    c_m = poincare_q_constant(mask, 1, bc_mode, tol, harmonic=harmonics[1])

    record = ConstantsRecord(
        c_p=c_p.constant,
        c_m=c_m.constant,
        c_hat=c_hat_from(c_m.constant),
        harmonic_dims={q: r.dimension for q, r in harmonics.items()},
        gap_ratios={q: r.gap_ratio for q, r in harmonics.items()},
        descriptor=mask.descriptor(),
        resolution=list(mask.shape),
        h=mask.h,
        bc_mode=bc_mode,
        flagged=any(r.gap_ratio < settings.gap_ratio_min for r in harmonics.values()),
        converged=(
            c_p.eigen.converged
            and c_m.eigen.converged
            and all(r.converged for r in harmonics.values())
        ),
        notes=[r.warning for r in harmonics.values() if r.warning],
    )
    logger.info(
        f"Constants on {mask.kind.value} {mask.shape}: c_p={record.c_p:.6f} "
        f"c_m={record.c_m:.6f} c_hat={record.c_hat:.6f}",
        extra={"harmonic_dims": record.harmonic_dims},
    )
    return record


def tensor_form_operator(
    mask: DomainMask, bc_mode: BCMode = BCMode.FULL_DIRICHLET
) -> tuple[LinearOperatorHandle, FieldSpace]:
    """Operator of ‖sym T‖² + ‖Curl T‖² on the free DOFs of the tensor BC space."""
    n = mask.N
    space = FieldSpace(mask, 1, bc_mode, rows=n)

    def apply(x: np.ndarray) -> np.ndarray:
        t = space.unpack(x)
        out = 0.5 * (t + t.swapaxes(0, 1))
        if n > 1:
            out -= delta_array(d_array(t, n, 1, mask.h), n, 2, mask.h)
        return space.pack(out)

    return LinearOperatorHandle(apply, space.dim, name=f"sym+curl[{BCMode(bc_mode).value}]"), space


def rayleigh_quotient(t: TensorField) -> float:
    """(‖sym T‖² + ‖Curl T‖²) / ‖T‖², 0 for the zero field."""
    operator, space = tensor_form_operator(t.mask, t.bc_mode)
    x = space.pack(t.values)
    norm_sq = float(x @ x)
    if norm_sq == 0.0:
        return 0.0
    return float(x @ operator(x)) / norm_sq


@dataclass
class SharpConstantResult:
    """Best discrete constant of the main inequality."""

    c_sharp: float
    eigenvalue: float
    test_quotient: float
    eigen: EigenReport


def sharp_constant(
    mask: DomainMask,
    bc_mode: BCMode = BCMode.FULL_DIRICHLET,
    tol: float | None = None,
    seed: int | None = None,
) -> SharpConstantResult:
    """c_sharp = λ_min^{-1/2} of ‖sym T‖² + ‖Curl T‖² against ‖T‖².

    A curl-free test field Grad v inside the BC space has quotient
    ‖sym Grad v‖²/‖Grad v‖² ≤ 1, which bounds λ_min from above. The tensor
    space is full_dirichlet in that mode and cellular otherwise.
    """
    settings = get_settings()
    seed = settings.eigen_seed if seed is None else seed
    operator, _ = tensor_form_operator(mask, tensor_mode(bc_mode))
    eigen = smallest_eigenpairs(
        operator, 1, tol=tol, shift=default_shift(mask), seed=seed, method="lobpcg"
    )
    lam = eigen.smallest
    test_quotient = rayleigh_quotient(compatible_tensor(mask, seed))
    if lam > test_quotient + settings.chain_tol:
        logger.warning(
            f"lambda_min {lam:.6e} exceeds the curl-free test quotient {test_quotient:.6e}",
            extra={"mask": mask.descriptor()},
        )
    c_sharp = 1.0 / math.sqrt(lam)
    logger.info(f"c_sharp = {c_sharp:.6f} on {mask.kind.value} {mask.shape}")
    return SharpConstantResult(c_sharp, lam, test_quotient, eigen)
