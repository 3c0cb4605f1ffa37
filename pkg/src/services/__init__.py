"""Numerical services of the Korn laboratory.

Campaigns live in ``src.services.campaigns`` and are imported from there, as
they depend on the experiment configuration.
"""

from .decomposition import DecompositionResult, helmholtz_decompose_tensor, hodge_decompose
from .diff_ops import (
    coderivative,
    curl,
    div,
    exterior_derivative,
    grad,
    tensor_curl,
    tensor_div,
    tensor_grad,
)
from .exterior_core import MultiIndex, enumerate_multi_indices, incidence_table
from .grid_fields import (
    BCMode,
    DomainKind,
    DomainMask,
    FormField,
    TensorField,
    VectorField,
    inner_product,
    make_domain,
    random_field,
    skew_part,
    sym_part,
)
from .korn_analysis import korn_check, main_lemma_chain, norm_equivalence_check
from .solvers import LinearOperatorHandle, cg_solve, dense_eigen_oracle, smallest_eigenpairs
from .spectral_constants import (
    ConstantsRecord,
    compute_constants,
    harmonic_dimension,
    poincare_q_constant,
    sharp_constant,
)

__all__ = [
    "BCMode",
    "ConstantsRecord",
    "DecompositionResult",
    "DomainKind",
    "DomainMask",
    "FormField",
    "LinearOperatorHandle",
    "MultiIndex",
    "TensorField",
    "VectorField",
    "cg_solve",
    "coderivative",
    "compute_constants",
    "curl",
    "dense_eigen_oracle",
    "div",
    "enumerate_multi_indices",
    "exterior_derivative",
    "grad",
    "harmonic_dimension",
    "helmholtz_decompose_tensor",
    "hodge_decompose",
    "incidence_table",
    "inner_product",
    "korn_check",
    "main_lemma_chain",
    "make_domain",
    "norm_equivalence_check",
    "poincare_q_constant",
    "random_field",
    "sharp_constant",
    "skew_part",
    "smallest_eigenpairs",
    "sym_part",
    "tensor_curl",
    "tensor_div",
    "tensor_grad",
]
