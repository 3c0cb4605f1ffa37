"""Matrix-free first-order operators on form fields.

d uses forward differences with zero padding beyond the grid, δ is its exact
negative adjoint (backward differences). Row-wise versions act on vector and
tensor fields. All operators allocate fresh outputs.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from src.services.exterior_core import component_count, incidence_table
from src.services.grid_fields import (
    BCMode,
    CurlField,
    DomainMask,
    FormField,
    TensorField,
    VectorField,
)
from src.utils.error_handler import DegreeError, IncompatibleFieldsError


class OperatorName(str, Enum):
    """First-order operators of the toolchain."""
    D = "d"
    DELTA = "delta"
    GRAD = "grad"
    CURL = "curl"
    DIV = "div"
    TENSOR_GRAD = "Grad"
    TENSOR_CURL = "Curl"
    TENSOR_DIV = "Div"


@dataclass(frozen=True)
class OperatorDescriptor:
    """Shape arithmetic of an operator in dimension N."""

    name: OperatorName
    ambient: int
    input_degree: int
    output_degree: int
    rows: int
    input_components: int
    output_components: int
    bc_mode: BCMode


def describe(name: OperatorName | str, n: int, q: int | None = None) -> OperatorDescriptor:
    """Descriptor of ``name`` in R^N (rows = N for the tensor operators).

    d and delta need the input degree ``q``.
    """
    name = OperatorName(name)
    degrees: dict[OperatorName, tuple[int | None, int | None]] = {
        OperatorName.D: (q, None if q is None else q + 1),
        OperatorName.DELTA: (q, None if q is None else q - 1),
        OperatorName.GRAD: (0, 1),
        OperatorName.CURL: (1, 2),
        OperatorName.DIV: (1, 0),
        OperatorName.TENSOR_GRAD: (0, 1),
        OperatorName.TENSOR_CURL: (1, 2),
        OperatorName.TENSOR_DIV: (1, 0),
    }
    q_in, q_out = degrees[name]
    if q_in is None or q_out is None:
        raise DegreeError(f"Operator {name.value} needs an explicit input degree")
    rows = n if name.value[0].isupper() else 1
    bc = BCMode.NONE if q_out < q_in else BCMode.CELLULAR
    return OperatorDescriptor(
        name=name,
        ambient=n,
        input_degree=q_in,
        output_degree=q_out,
        rows=rows,
        input_components=component_count(n, q_in),
        output_components=component_count(n, q_out),
        bc_mode=bc,
    )


def forward_difference(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    """(u(x + h e) − u(x)) / h with u = 0 beyond the grid."""
    return np.diff(u, axis=axis, append=0.0) / h


def backward_difference(w: np.ndarray, axis: int, h: float) -> np.ndarray:
    """(w(x) − w(x − h e)) / h with w = 0 before the grid; equals −Dᵀw."""
    return np.diff(w, axis=axis, prepend=0.0) / h


def _component(values: np.ndarray, c: int, n: int) -> np.ndarray:
    return values[(Ellipsis, c) + (slice(None),) * n]


def d_array(values: np.ndarray, n: int, q: int, h: float) -> np.ndarray:
    """Exterior derivative on raw arrays shaped (..., C(N,q), *spatial)."""
    if q >= n:
        raise DegreeError(
            f"No forms of degree {q + 1} in dimension {n}",
            details={"N": n, "q": q},
        )
    spatial = values.shape[-n:]
    out = np.zeros(values.shape[:-(n + 1)] + (component_count(n, q + 1),) + spatial)
    for entry in incidence_table(n, q):
        diff = forward_difference(
            _component(values, entry.source_rank, n), entry.direction - 1 - n, h
        )
        target = _component(out, entry.target_rank, n)
        if entry.sign > 0:
            target += diff
        else:
            target -= diff
    return out


def delta_array(values: np.ndarray, n: int, q: int, h: float) -> np.ndarray:
    """Coderivative δ = −Dᵀ on raw arrays shaped (..., C(N,q), *spatial)."""
    if q <= 0:
        raise DegreeError(
            "Coderivative of a 0-form is undefined",
            details={"N": n, "q": q},
        )
    spatial = values.shape[-n:]
    out = np.zeros(values.shape[:-(n + 1)] + (component_count(n, q - 1),) + spatial)
    for entry in incidence_table(n, q - 1):
        diff = backward_difference(
            _component(values, entry.target_rank, n), entry.direction - 1 - n, h
        )
        source = _component(out, entry.source_rank, n)
        if entry.sign > 0:
            source += diff
        else:
            source -= diff
    return out


def _image_mode(bc_mode: BCMode) -> BCMode:
    # d maps the cellular subcomplex, and full_dirichlet inside it, to cellular
    if bc_mode in (BCMode.FULL_DIRICHLET, BCMode.CELLULAR):
        return BCMode.CELLULAR
    return BCMode.NONE


def exterior_derivative(e: FormField) -> FormField:
    """d: degree q → q+1."""
    mask = e.mask
    values = d_array(e.components, mask.N, e.q, mask.h)
    return FormField(mask, e.q + 1, values, _image_mode(e.bc_mode))


def coderivative(e: FormField) -> FormField:
    """δ: degree q → q−1, with ⟨dE, H⟩ = −⟨E, δH⟩ for every E."""
    mask = e.mask
    values = delta_array(e.components, mask.N, e.q, mask.h)
    return FormField(mask, e.q - 1, values, BCMode.NONE)


def _expect_degree(field: FormField, q: int, op: str) -> None:
    if field.q != q:
        raise IncompatibleFieldsError(f"{op} expects a {q}-form, got degree {field.q}")


def grad(u: FormField) -> FormField:
    """grad ≅ d on 0-forms."""
    _expect_degree(u, 0, "grad")
    return exterior_derivative(u)


def curl(v: FormField) -> FormField:
    """curl ≅ d on 1-forms; (N−1)N/2 components ordered (1,2), (1,3), ..."""
    _expect_degree(v, 1, "curl")
    return exterior_derivative(v)


def div(v: FormField) -> FormField:
    """div ≅ δ on 1-forms (backward differences, the adjoint divergence)."""
    _expect_degree(v, 1, "div")
    return coderivative(v)


def tensor_grad(v: VectorField) -> TensorField:
    """Row-wise gradient: (Grad v)_n = grad v_n, the discrete Jacobian."""
    if not isinstance(v, VectorField):
        raise IncompatibleFieldsError("Grad expects a VectorField")
    mask = v.mask
    return TensorField(mask, d_array(v.values, mask.N, 0, mask.h), _image_mode(v.bc_mode))


def tensor_curl(t: TensorField) -> CurlField:
    """Row-wise curl: (Curl T)_{i,(j,k)} = D_j T_ik − D_k T_ij."""
    if not isinstance(t, TensorField):
        raise IncompatibleFieldsError("Curl expects a TensorField")
    mask = t.mask
    return CurlField(mask, d_array(t.values, mask.N, 1, mask.h), _image_mode(t.bc_mode))


def tensor_div(t: TensorField) -> VectorField:
    """Row-wise adjoint divergence: (Div T)_n = div T_n."""
    if not isinstance(t, TensorField):
        raise IncompatibleFieldsError("Div expects a TensorField")
    mask = t.mask
    return VectorField(mask, delta_array(t.values, mask.N, 1, mask.h), BCMode.NONE)


def project_free(values: np.ndarray, mask: DomainMask, q: int, bc_mode: BCMode) -> np.ndarray:
    """Zero every entry that is constrained in the (q, bc_mode) space."""
    return np.where(mask.free_mask(q, bc_mode), values, 0.0)


def bc_coderivative_array(
    values: np.ndarray, mask: DomainMask, q: int, bc_mode: BCMode
) -> np.ndarray:
    """δ followed by projection onto the free (q−1)-DOFs: the adjoint of d restricted to the BC space."""
    return project_free(delta_array(values, mask.N, q, mask.h), mask, q - 1, bc_mode)


def curl_operator_bound(n: int, h: float) -> float:
    """Stencil-count bound 2√(2N)/h on the operator norm of Curl."""
    return 2.0 * math.sqrt(2.0 * n) / h


def compatible_support(mask: DomainMask) -> np.ndarray:
    """Vertices free for full_dirichlet 0-forms whose backward neighbours are free too.

    Grad v of a vector supported here vanishes on every cell that touches the
    boundary, so it lies in the full_dirichlet tensor space.
    """
    anchored = mask.free_mask(0, BCMode.FULL_DIRICHLET)[0]
    deep = anchored.copy()
    for axis in range(mask.N):
        shifted = np.zeros_like(anchored)
        body = [slice(None)] * mask.N
        back = [slice(None)] * mask.N
        body[axis] = slice(1, None)
        back[axis] = slice(None, -1)
        shifted[tuple(body)] = anchored[tuple(back)]
        deep &= shifted
    return deep


def compatible_vector(mask: DomainMask, seed: int = 0) -> VectorField:
    """Random full_dirichlet vector supported on ``compatible_support``."""
    rng = np.random.default_rng(seed)
    support = compatible_support(mask)
    values = rng.uniform(-1.0, 1.0, size=(mask.N, 1) + mask.shape)
    return VectorField(mask, np.where(support, values, 0.0), BCMode.FULL_DIRICHLET)


def compatible_tensor(mask: DomainMask, seed: int = 0) -> TensorField:
    """Curl-free full_dirichlet tensor T = Grad v for a random vector v."""
    t = tensor_grad(compatible_vector(mask, seed))
    return TensorField(mask, t.values, BCMode.FULL_DIRICHLET)
