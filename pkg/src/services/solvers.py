"""Deterministic matrix-free linear algebra.

All solvers act on flat free-DOF vectors (see ``FieldSpace``) with the
Euclidean product. Eigenpairs come from ARPACK in shift-invert mode, where the
inverse is applied by our own conjugate gradients on the deflated, shifted
operator, or from LOBPCG with a Chebyshev preconditioner of the same shifted
operator. Small problems and the oracle use dense LAPACK.
"""

import logging
import math
import warnings
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, lobpcg

from src.config.settings import get_settings
from src.services.grid_fields import dot
from src.utils.error_handler import (
    DenseLimitError,
    IllPosedDeflationError,
    NumericalBreakdownError,
)

logger = logging.getLogger(__name__)

# Below this effective dimension ARPACK is skipped in favour of dense eigh.
_DENSE_FALLBACK_DIM = 32
# Relative singular-value cut used to detect dependent deflation vectors.
_DEFLATION_RCOND = 1e-10
# Extra LOBPCG block vectors beyond the k requested.
_LOBPCG_GUARD = 3


class LinearOperatorHandle:
    """Symmetric operator on R^dim given by its action, with an optional deflation basis."""

    def __init__(
        self,
        apply: Callable[[np.ndarray], np.ndarray],
        dim: int,
        name: str = "operator",
        deflation: np.ndarray | None = None,
    ):
        self._apply = apply
        self.dim = dim
        self.name = name
        self.deflation = deflation
        self.applications = 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        self.applications += 1
        return np.asarray(self._apply(np.asarray(x, dtype=np.float64)), dtype=np.float64)

    def as_scipy(self) -> LinearOperator:
        return LinearOperator(
            (self.dim, self.dim), matvec=self.__call__, dtype=np.float64
        )

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, name: str = "matrix") -> "LinearOperatorHandle":
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(lambda x: matrix @ x, matrix.shape[0], name=name)


@dataclass
class SolveReport:
    """Outcome of a conjugate-gradient solve."""

    iterations: int
    residual: float
    converged: bool
    tolerance: float


@dataclass
class EigenReport:
    """Smallest eigenpairs of a symmetric operator on a (deflated) space.

    Eigenvectors are the columns of ``eigenvectors``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    deflation_dimension: int
    converged: bool
    method: str
    seed: int
    tolerance: float
    symmetry_defect: float | None = None
    residual_bounds: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def smallest(self) -> float:
        return float(self.eigenvalues[0])


def cg_solve(
    A: LinearOperatorHandle,  # noqa: N803
    b: np.ndarray,
    tol: float | None = None,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Conjugate gradients for A x = b with A symmetric positive (semi)definite.

    Converges when the recursive residual satisfies ‖r‖ ≤ tol·‖b‖. Raises
    NumericalBreakdownError on non-finite values or a non-positive curvature
    p·Ap, which means A is not definite on the Krylov space of b.
    """
    settings = get_settings()
    tol = settings.cg_tol if tol is None else tol
    max_iter = settings.cg_max_iter if max_iter is None else max_iter

    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    b_norm = math.sqrt(dot(b, b))
    if b_norm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True, tol)

    r = b - A(x) if x0 is not None else b.copy()
    p = r.copy()
    rs_old = dot(r, r)
    residual = math.sqrt(rs_old) / b_norm
    iteration = 0

    while residual > tol and iteration < max_iter:
        Ap = A(p)  # noqa: N806
        curvature = dot(p, Ap)
        if not math.isfinite(curvature) or curvature <= 0.0:
            raise NumericalBreakdownError(
                "cg",
                iteration,
                details={"operator": A.name, "curvature": curvature},
            )
        alpha = rs_old / curvature
        x = x + alpha * p
        r = r - alpha * Ap
        rs_new = dot(r, r)
        if not math.isfinite(rs_new):
            raise NumericalBreakdownError("cg", iteration, details={"operator": A.name})
        p = r + (rs_new / rs_old) * p
        rs_old = rs_new
        residual = math.sqrt(rs_new) / b_norm
        iteration += 1

    converged = residual <= tol
    if converged:
        logger.debug(f"CG on {A.name} converged in {iteration} iterations (residual {residual:.2e})")
    else:
        logger.warning(
            f"CG on {A.name} stopped after {iteration} iterations",
            extra={"residual": residual, "tolerance": tol},
        )
    return x, SolveReport(iteration, residual, converged, tol)


def power_iteration(
    A: LinearOperatorHandle,  # noqa: N803
    steps: int | None = None,
    seed: int | None = None,
    rel_change: float = 1e-6,
) -> float:
    """Estimate of the largest eigenvalue by repeated application from a seeded start."""
    settings = get_settings()
    steps = settings.power_iter_steps if steps is None else steps
    seed = settings.eigen_seed if seed is None else seed
    if A.dim == 0:
        return 0.0

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.dim)
    x /= math.sqrt(dot(x, x))
    estimate = 0.0
    for step in range(steps):
        y = A(x)
        rayleigh = dot(x, y)
        norm = math.sqrt(dot(y, y))
        if norm == 0.0:
            return 0.0
        x = y / norm
        if step > 0 and abs(rayleigh - estimate) <= rel_change * abs(rayleigh):
            estimate = rayleigh
            break
        estimate = rayleigh
    logger.debug(f"Power iteration on {A.name}: lambda_ref ~ {estimate:.6e}")
    return float(estimate)


def orthonormal_deflation(vectors: np.ndarray | list[np.ndarray] | None, dim: int) -> np.ndarray:
    """Orthonormal basis (dim × m) of the deflation span.

    Raises IllPosedDeflationError when the vectors are linearly dependent.
    """
    if vectors is None:
        return np.zeros((dim, 0))
    V = np.column_stack(list(vectors)) if isinstance(vectors, list) else np.asarray(vectors)  # noqa: N806
    if V.size == 0:
        return np.zeros((dim, 0))
    if V.ndim == 1:
        V = V[:, np.newaxis]  # noqa: N806
    U = scipy.linalg.orth(V, rcond=_DEFLATION_RCOND)  # noqa: N806
    if U.shape[1] < V.shape[1]:
        raise IllPosedDeflationError(rank=U.shape[1], count=V.shape[1])
    return U


def _projector(U: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:  # noqa: N803
    if U.shape[1] == 0:
        return lambda x: x
    return lambda x: x - U @ (U.T @ x)


def materialize(apply: Callable[[np.ndarray], np.ndarray], dim_in: int) -> np.ndarray:
    """Dense matrix of a linear map by probing unit vectors column by column."""
    columns = []
    e = np.zeros(dim_in)
    for j in range(dim_in):
        e[j] = 1.0
        columns.append(np.asarray(apply(e), dtype=np.float64).copy())
        e[j] = 0.0
    if not columns:
        return np.zeros((0, 0))
    return np.column_stack(columns)


def _residuals(
    A: Callable[[np.ndarray], np.ndarray], values: np.ndarray, vectors: np.ndarray  # noqa: N803
) -> np.ndarray:
    out = np.empty(len(values))
    for j, lam in enumerate(values):
        v = vectors[:, j]
        out[j] = np.linalg.norm(A(v) - lam * v) / max(np.linalg.norm(v), 1e-300)
    return out


def _dense_restricted(
    A: LinearOperatorHandle, U: np.ndarray  # noqa: N803
) -> tuple[np.ndarray, np.ndarray, float]:
    """Eigen-decomposition of A restricted to the orthogonal complement of span(U)."""
    matrix = materialize(A, A.dim)
    defect = float(np.max(np.abs(matrix - matrix.T))) if matrix.size else 0.0
    matrix = 0.5 * (matrix + matrix.T)
    if U.shape[1]:
        basis = scipy.linalg.null_space(U.T)
        values, coeffs = scipy.linalg.eigh(basis.T @ matrix @ basis)
        return values, basis @ coeffs, defect
    values, vectors = scipy.linalg.eigh(matrix)
    return values, vectors, defect


def chebyshev_inverse(
    A: LinearOperatorHandle,  # noqa: N803
    lower: float,
    upper: float,
    degree: int,
) -> Callable[[np.ndarray], np.ndarray]:
    """Fixed-degree Chebyshev approximation of A⁻¹ for spectrum in [lower, upper].

    The result is a polynomial in A, hence linear, symmetric and positive
    definite on that interval; it serves as a LOBPCG preconditioner.
    """
    theta = 0.5 * (upper + lower)
    delta = 0.5 * (upper - lower)
    sigma = theta / delta

    def apply(b: np.ndarray) -> np.ndarray:
        x = np.zeros_like(b)
        r = b.copy()
        rho = 1.0 / sigma
        d = r / theta
        for _ in range(degree):
            x = x + d
            r = r - A(d)
            rho_next = 1.0 / (2.0 * sigma - rho)
            d = rho_next * rho * d + (2.0 * rho_next / delta) * r
            rho = rho_next
        return x

    return apply


def _residual_bounds(values: np.ndarray, shift: float, residual_tol: float) -> np.ndarray:
    """Per-pair bound residual_tol·max(|λ_j|, shift) that the residuals must meet."""
    return residual_tol * np.maximum(np.abs(values), shift)


def _arpack_pairs(
    A: LinearOperatorHandle,  # noqa: N803
    deflated: Callable[[np.ndarray], np.ndarray],
    project: Callable[[np.ndarray], np.ndarray],
    k: int,
    tol: float,
    shift: float,
    seed: int,
    notes: list[str],
) -> tuple[np.ndarray, np.ndarray, bool]:
    settings = get_settings()
    shifted = LinearOperatorHandle(
        lambda x: deflated(x) + shift * x, A.dim, name=f"{A.name}+shift"
    )
    inner_failures = 0

    def inverse(x: np.ndarray) -> np.ndarray:
        nonlocal inner_failures
        # inner accuracy tracks the outer tolerance
        y, report = cg_solve(shifted, project(x), tol=tol)
        if not report.converged:
            inner_failures += 1
        return project(y)

    rng = np.random.default_rng(seed)
    v0 = project(rng.standard_normal(A.dim))
    converged = True
    try:
        values, vectors = eigsh(
            LinearOperator((A.dim, A.dim), matvec=deflated, dtype=np.float64),
            k=k,
            sigma=-shift,
            which="LM",
            OPinv=LinearOperator((A.dim, A.dim), matvec=inverse, dtype=np.float64),
            v0=v0,
            tol=tol,
            maxiter=settings.eig_max_iter,
        )
    except ArpackNoConvergence as e:
        converged = False
        values, vectors = e.eigenvalues, e.eigenvectors
        notes.append(f"ARPACK returned {len(values)} of {k} pairs")
        logger.warning(
            f"Eigen solve on {A.name} did not converge",
            extra={"requested": k, "returned": len(values)},
        )
    if inner_failures:
        notes.append(f"{inner_failures} inner CG solves missed the tolerance")
    return np.asarray(values), np.asarray(vectors), converged


def _lobpcg_pairs(
    A: LinearOperatorHandle,  # noqa: N803
    deflated: Callable[[np.ndarray], np.ndarray],
    U: np.ndarray,  # noqa: N803
    k: int,
    shift: float,
    residual_tol: float,
    seed: int,
    notes: list[str],
) -> tuple[np.ndarray, np.ndarray, bool]:
    settings = get_settings()
    effective = A.dim - U.shape[1]
    block = min(k + _LOBPCG_GUARD, max(effective // 5, k))

    shifted = LinearOperatorHandle(
        lambda x: deflated(x) + shift * x, A.dim, name=f"{A.name}+shift"
    )
    upper = 1.25 * power_iteration(shifted, seed=seed)
    degree = min(
        settings.precond_degree_max, max(4, math.ceil(math.sqrt(upper / shift)))
    )
    precondition = chebyshev_inverse(shifted, shift, upper, degree)

    def block_apply(apply: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
        def matmat(X: np.ndarray) -> np.ndarray:  # noqa: N803
            X = np.asarray(X, dtype=np.float64)  # noqa: N806
            if X.ndim == 1:
                return apply(X)
            return np.column_stack([apply(X[:, j]) for j in range(X.shape[1])])

        return matmat

    operator = LinearOperator(
        (A.dim, A.dim),
        matvec=lambda x: deflated(np.ravel(x)),
        matmat=block_apply(deflated),
        dtype=np.float64,
    )
    preconditioner = LinearOperator(
        (A.dim, A.dim),
        matvec=lambda x: precondition(np.ravel(x)),
        matmat=block_apply(precondition),
        dtype=np.float64,
    )
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((A.dim, block))  # noqa: N806
    if U.shape[1]:
        X -= U @ (U.T @ X)  # noqa: N806

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        values, vectors = lobpcg(
            operator,
            X,
            M=preconditioner,
            Y=U if U.shape[1] else None,
            tol=residual_tol * shift,
            maxiter=settings.eig_max_iter,
            largest=False,
        )
    converged = True
    for warning in caught:
        notes.append(f"LOBPCG: {warning.message}")
        converged = False
    logger.debug(
        f"LOBPCG on {A.name}: block {block}, Chebyshev degree {degree}",
        extra={"upper_estimate": upper},
    )
    order = np.argsort(values)[:k]
    return np.asarray(values)[order], np.asarray(vectors)[:, order], converged


def smallest_eigenpairs(
    A: LinearOperatorHandle,  # noqa: N803
    k: int,
    deflation: np.ndarray | list[np.ndarray] | None = None,
    tol: float | None = None,
    shift: float = 1.0,
    seed: int | None = None,
    method: Literal["arpack", "lobpcg"] = "arpack",
) -> EigenReport:
    """k smallest eigenpairs of A on the orthogonal complement of the deflation span.

    ``arpack`` runs shift-invert around −shift: the Krylov operator is
    Q (QAQ + shift·I)⁻¹ Q with Q the orthogonal projector off the deflation
    span, inverted by CG to the outer tolerance. ``lobpcg`` keeps the
    deflation span as a hard constraint and preconditions with a Chebyshev
    polynomial of the shifted operator; it needs no inner solves and is the
    faster choice for large tensor problems.

    Either way a pair counts as converged when its residual ‖Av − λv‖ is at
    most ``eig_residual_tol``·max(|λ|, shift); the bounds are returned in the
    report.
    """
    settings = get_settings()
    tol = settings.eig_tol if tol is None else tol
    seed = settings.eigen_seed if seed is None else seed
    residual_tol = settings.eig_residual_tol
    if deflation is None and A.deflation is not None:
        deflation = A.deflation
    U = orthonormal_deflation(deflation, A.dim)  # noqa: N806
    m = U.shape[1]
    effective = A.dim - m
    k = min(k, effective)
    if k <= 0:
        return EigenReport(
            np.zeros(0), np.zeros((A.dim, 0)), np.zeros(0), m, True, "empty", seed, tol
        )

    project = _projector(U)

    def deflated(x: np.ndarray) -> np.ndarray:
        return project(A(project(x)))

    if effective <= max(_DENSE_FALLBACK_DIM, 2 * k + 2):
        values, vectors, defect = _dense_restricted(A, U)
        values, vectors = values[:k], vectors[:, :k]
        residuals = _residuals(deflated, values, vectors)
        bounds = _residual_bounds(values, shift, residual_tol)
        return EigenReport(
            values, vectors, residuals, m, True, "dense", seed, tol, defect, residual_bounds=bounds
        )

    notes: list[str] = []
    if method == "lobpcg":
        values, vectors, converged = _lobpcg_pairs(A, deflated, U, k, shift, residual_tol, seed, notes)
        label = "lobpcg-chebyshev"
    else:
        values, vectors, converged = _arpack_pairs(A, deflated, project, k, tol, shift, seed, notes)
        label = "arpack-shift-invert"

    order = np.argsort(values)
    values = values[order]
    vectors = np.column_stack([project(vectors[:, j]) for j in order]) if len(order) else vectors
    residuals = _residuals(deflated, values, vectors)
    bounds = _residual_bounds(values, shift, residual_tol)
    if len(values) and np.any(residuals > bounds):
        converged = False
        notes.append("residual bound exceeded")
    elif method == "lobpcg":
        # LOBPCG warns on its own stopping rule; the residual bound decides
        converged = True

    logger.debug(
        f"Smallest eigenpairs of {A.name}: {values[:min(3, len(values))]}",
        extra={"deflation_dimension": m, "applications": A.applications, "method": label},
    )
    return EigenReport(
        values, vectors, residuals, m, converged, label, seed, tol, notes=notes, residual_bounds=bounds
    )


def dense_eigen_oracle(
    A: LinearOperatorHandle,  # noqa: N803
    dof_limit: int | None = None,
    deflation: np.ndarray | list[np.ndarray] | None = None,
) -> EigenReport:
    """Full spectrum of A by column probing and LAPACK; refuses beyond ``dof_limit``."""
    settings = get_settings()
    dof_limit = settings.dense_dof_limit if dof_limit is None else dof_limit
    if A.dim > dof_limit:
        raise DenseLimitError(dof=A.dim, limit=dof_limit)

    U = orthonormal_deflation(deflation, A.dim)  # noqa: N806
    values, vectors, defect = _dense_restricted(A, U)
    project = _projector(U)
    residuals = _residuals(lambda x: project(A(project(x))), values, vectors)
    logger.debug(f"Dense oracle on {A.name}: dim={A.dim}, symmetry defect={defect:.2e}")
    return EigenReport(
        values,
        vectors,
        residuals,
        U.shape[1],
        True,
        "dense",
        settings.eigen_seed,
        0.0,
        symmetry_defect=defect,
    )
