"""Masked cubical grids and the fields that live on them.

Fields are stored collocated on the vertices of the full bounding box with
hard zeros outside the domain. Component J stored at vertex x is read as the
value on the cube cell x + h[0,1]^J.

A vertex is a boundary vertex when one of its axis neighbours is outside the
domain; the axes where that happens form its normal set M(x). The tangential
space frees component J at a boundary vertex exactly when J meets M(x). The
cellular space frees only cells all of whose containing N-cubes are inside:
forward differences map it into itself, so spectral problems live there.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from itertools import product
from typing import Any, Union

import numpy as np
from scipy import ndimage

from src.config.settings import get_settings
from src.services.exterior_core import (
    MultiIndex,
    component_count,
    enumerate_multi_indices,
    rank_of,
)
from src.utils.error_handler import DegreeError, IncompatibleFieldsError, InvalidDomainError

logger = logging.getLogger(__name__)

# Slack for analytic inclusion tests at vertices that sit exactly on a sphere.
_INCLUSION_EPS = 1e-12


class DomainKind(str, Enum):
    """Shipped domain generators."""
    BOX = "box"
    BALL = "ball"
    ANNULUS = "annulus"
    SHELL = "shell"
    SOLID_TORUS = "solid_torus"


class BCMode(str, Enum):
    """Boundary-condition space of a field."""
    FULL_DIRICHLET = "full_dirichlet"
    TANGENTIAL = "tangential"
    CELLULAR = "cellular"
    NONE = "none"


class VertexClass(IntEnum):
    """Per-vertex classification label."""
    EXTERIOR = 0
    BOUNDARY = 1
    INTERIOR = 2


def _as_array(values: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Staircase domain on an N-dimensional vertex lattice with uniform spacing h."""

    kind: DomainKind
    shape: tuple[int, ...]
    h: float
    origin: tuple[float, ...]
    cubes: np.ndarray
    classification: np.ndarray
    boundary_components: int
    geometry: dict[str, Any] = field(default_factory=dict)
    _free_cache: dict[tuple[int, BCMode], np.ndarray] = field(
        default_factory=dict, repr=False, compare=False
    )

    @property
    def N(self) -> int:  # noqa: N802
        return len(self.shape)

    @property
    def inside(self) -> np.ndarray:
        return self.classification != VertexClass.EXTERIOR

    @property
    def interior(self) -> np.ndarray:
        return self.classification == VertexClass.INTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return self.classification == VertexClass.BOUNDARY

    @property
    def cell_volume(self) -> float:
        return self.h ** self.N

    def coordinates(self) -> list[np.ndarray]:
        """Vertex coordinates per axis, broadcast to the full grid."""
        axes = [self.origin[k] + self.h * np.arange(n) for k, n in enumerate(self.shape)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def _padded_cubes(self) -> np.ndarray:
        return np.pad(self.cubes, 1, mode="constant", constant_values=False)

    def free_mask(self, q: int, bc_mode: BCMode) -> np.ndarray:
        """Free degrees of freedom of a q-form, shape (C(N,q), *shape)."""
        bc_mode = BCMode(bc_mode)
        key = (q, bc_mode)
        cached = self._free_cache.get(key)
        if cached is not None:
            return cached

        indices = enumerate_multi_indices(self.N, q)
        if bc_mode == BCMode.NONE:
            free = np.broadcast_to(self.inside, (len(indices),) + self.shape).copy()
        elif bc_mode == BCMode.TANGENTIAL:
            normals = normal_axes(self.inside)
            free = np.empty((len(indices),) + self.shape, dtype=bool)
            for c, index in enumerate(indices):
                crossing = np.zeros(self.shape, dtype=bool)
                for k in index.axes:
                    crossing |= normals[k]
                free[c] = self.interior | (self.boundary & crossing)
        else:
            padded = self._padded_cubes()
            free = np.empty((len(indices),) + self.shape, dtype=bool)
            for c, index in enumerate(indices):
                free[c] = self._cells_in_open_domain(padded, index)
            if bc_mode == BCMode.FULL_DIRICHLET:
                free &= self.interior[np.newaxis]
        free.setflags(write=False)
        self._free_cache[key] = free
        return free

    def _cells_in_open_domain(self, padded: np.ndarray, index: MultiIndex) -> np.ndarray:
        """Cells x + [0,1]^J all of whose containing N-cubes are inside."""
        spanned = set(index.axes)
        result = np.ones(self.shape, dtype=bool)
        offsets = [(0,) if k in spanned else (0, 1) for k in range(self.N)]
        for shift in product(*offsets):
            window = tuple(
                slice(1 - s, 1 - s + n) for s, n in zip(shift, self.shape)
            )
            result &= padded[window]
        return result

    def descriptor(self) -> dict[str, Any]:
        """Serializable summary used in reports and snapshots."""
        return {
            "kind": self.kind.value,
            "N": self.N,
            "shape": list(self.shape),
            "h": self.h,
            "origin": list(self.origin),
            "geometry": dict(self.geometry),
            "boundary_components": self.boundary_components,
            "inside_vertices": int(self.inside.sum()),
            "interior_vertices": int(self.interior.sum()),
        }


def normal_axes(inside: np.ndarray) -> np.ndarray:
    """Per axis k, the inside vertices whose neighbour x − e_k or x + e_k is not inside.

    Neighbours beyond the grid count as outside. Shape (N, *inside.shape).
    """
    n = inside.ndim
    padded = np.pad(inside, 1, mode="constant", constant_values=False)
    normals = np.empty((n,) + inside.shape, dtype=bool)
    centre = tuple(slice(1, 1 + m) for m in inside.shape)
    for k in range(n):
        below = list(centre)
        above = list(centre)
        below[k] = slice(0, inside.shape[k])
        above[k] = slice(2, 2 + inside.shape[k])
        normals[k] = inside & ~(padded[tuple(below)] & padded[tuple(above)])
    return normals


def classify_vertices(inside: np.ndarray) -> np.ndarray:
    """Label vertices from the inclusion predicate.

    An inside vertex is boundary when some axis neighbour is outside the
    domain or beyond the grid, and interior otherwise.
    """
    labels = np.full(inside.shape, VertexClass.EXTERIOR, dtype=np.int8)
    labels[inside] = VertexClass.INTERIOR
    labels[normal_axes(inside).any(axis=0)] = VertexClass.BOUNDARY
    return labels


def count_boundary_components(classification: np.ndarray) -> int:
    """Connected components of the boundary vertex set.

    Vertices sharing any cube corner are adjacent: axis-neighbour boundaries
    of staircase spheres step diagonally.
    """
    boundary = classification == VertexClass.BOUNDARY
    structure = ndimage.generate_binary_structure(classification.ndim, classification.ndim)
    _, count = ndimage.label(boundary, structure=structure)
    return int(count)


def _vertex_predicate(
    kind: DomainKind,
    coords: list[np.ndarray],
    geometry: dict[str, Any],
) -> np.ndarray:
    if kind == DomainKind.BOX:
        lower = geometry.get("lower")
        upper = geometry.get("upper")
        inside = np.ones(coords[0].shape, dtype=bool)
        for k, x in enumerate(coords):
            if lower is not None:
                inside &= x >= lower[k] - _INCLUSION_EPS
            if upper is not None:
                inside &= x <= upper[k] + _INCLUSION_EPS
        return inside

    center = geometry["center"]
    if kind == DomainKind.SOLID_TORUS:
        x, y, z = (c - c0 for c, c0 in zip(coords, center))
        ring = np.sqrt(x**2 + y**2) - geometry["major_radius"]
        return ring**2 + z**2 <= geometry["minor_radius"] ** 2 + _INCLUSION_EPS

    radius = np.sqrt(sum((c - c0) ** 2 for c, c0 in zip(coords, center)))
    inside = radius <= geometry["outer_radius"] + _INCLUSION_EPS
    if kind in (DomainKind.ANNULUS, DomainKind.SHELL):
        inside &= radius >= geometry["inner_radius"] - _INCLUSION_EPS
    return inside


def _default_geometry(kind: DomainKind, extent: list[float]) -> dict[str, Any]:
    center = [e / 2.0 for e in extent]
    half = min(extent) / 2.0
    if kind == DomainKind.BOX:
        return {}
    if kind == DomainKind.BALL:
        return {"center": center, "outer_radius": half}
    if kind in (DomainKind.ANNULUS, DomainKind.SHELL):
        return {"center": center, "inner_radius": half / 2.0, "outer_radius": half}
    return {"center": center, "major_radius": 0.6 * half, "minor_radius": 0.3 * half}


def make_domain(
    kind: DomainKind | str,
    resolution: tuple[int, ...] | list[int],
    h: float,
    geometry: dict[str, Any] | None = None,
    origin: tuple[float, ...] | None = None,
) -> DomainMask:
    """Build a staircase domain mask.

    The grid covers [origin, origin + (n-1)h] per axis (origin defaults to 0).
    Curved domains default to shapes centred in the grid; a ``radius`` key is
    accepted as an alias of ``outer_radius`` and ``radii`` as (inner, outer).
    """
    kind = DomainKind(kind)
    resolution = tuple(int(n) for n in resolution)
    n_dim = len(resolution)

    if n_dim < 1:
        raise InvalidDomainError("Resolution must name at least one axis")
    if any(n < 3 for n in resolution):
        raise InvalidDomainError(
            f"Resolution must be >= 3 per axis, got {resolution}",
            details={"resolution": list(resolution)},
        )
    if h <= 0:
        raise InvalidDomainError(f"Spacing must be positive, got {h}")
    if kind == DomainKind.ANNULUS and n_dim != 2:
        raise InvalidDomainError(f"Annulus requires N=2, got N={n_dim}")
    if kind in (DomainKind.SHELL, DomainKind.SOLID_TORUS) and n_dim != 3:
        raise InvalidDomainError(f"{kind.value} requires N=3, got N={n_dim}")

    origin = tuple(float(o) for o in origin) if origin is not None else (0.0,) * n_dim
    extent = [h * (n - 1) for n in resolution]
    merged = _default_geometry(kind, extent)
    merged.update(_normalise_geometry(geometry or {}))
    _validate_geometry(kind, merged, n_dim)

    axes = [origin[k] + h * np.arange(n) for k, n in enumerate(resolution)]
    coords = np.meshgrid(*axes, indexing="ij")
    raw = _vertex_predicate(kind, coords, merged)

    cubes = np.ones(tuple(n - 1 for n in resolution), dtype=bool)
    for shift in product((0, 1), repeat=n_dim):
        window = tuple(slice(s, s + n - 1) for s, n in zip(shift, resolution))
        cubes &= raw[window]
    if not cubes.any():
        raise InvalidDomainError(
            f"Domain {kind.value} contains no inside cell at resolution {resolution}",
            details={"geometry": merged},
        )
    cubes.setflags(write=False)

    classification = classify_vertices(raw)
    classification.setflags(write=False)
    components = count_boundary_components(classification)

    mask = DomainMask(
        kind=kind,
        shape=resolution,
        h=float(h),
        origin=origin,
        cubes=cubes,
        classification=classification,
        boundary_components=components,
        geometry=merged,
    )
    logger.debug(
        f"Built {kind.value} mask {resolution} with {components} boundary components",
        extra={"descriptor": mask.descriptor()},
    )
    return mask


def _normalise_geometry(geometry: dict[str, Any]) -> dict[str, Any]:
    out = dict(geometry)
    if "radius" in out:
        out["outer_radius"] = out.pop("radius")
    if "radii" in out:
        inner, outer = out.pop("radii")
        out["inner_radius"], out["outer_radius"] = inner, outer
    return out


def _validate_geometry(kind: DomainKind, geometry: dict[str, Any], n_dim: int) -> None:
    if kind == DomainKind.BOX:
        return
    if len(geometry["center"]) != n_dim:
        raise InvalidDomainError(f"Center must have {n_dim} coordinates")
    if kind == DomainKind.SOLID_TORUS:
        if not 0 < geometry["minor_radius"] < geometry["major_radius"]:
            raise InvalidDomainError(
                "Solid torus needs 0 < minor_radius < major_radius",
                details={"geometry": geometry},
            )
        return
    if geometry["outer_radius"] <= 0:
        raise InvalidDomainError("Outer radius must be positive")
    if kind in (DomainKind.ANNULUS, DomainKind.SHELL):
        if not 0 <= geometry["inner_radius"] < geometry["outer_radius"]:
            raise InvalidDomainError(
                "Inner radius must be smaller than outer radius",
                details={"geometry": geometry},
            )


@dataclass(frozen=True, eq=False)
class FormField:
    """A rank-q cochain: C(N,q) component grids on the mask's bounding box."""

    mask: DomainMask
    q: int
    components: np.ndarray
    bc_mode: BCMode = BCMode.NONE

    def __post_init__(self) -> None:
        if not 0 <= self.q <= self.mask.N:
            raise DegreeError(f"Degree {self.q} outside [0, {self.mask.N}]")
        expected = (component_count(self.mask.N, self.q),) + self.mask.shape
        if self.components.shape != expected:
            raise IncompatibleFieldsError(
                f"Component array has shape {self.components.shape}, expected {expected}"
            )
        object.__setattr__(self, "components", _as_array(self.components))
        object.__setattr__(self, "bc_mode", BCMode(self.bc_mode))

    @classmethod
    def zeros(cls, mask: DomainMask, q: int, bc_mode: BCMode = BCMode.NONE) -> "FormField":
        shape = (component_count(mask.N, q),) + mask.shape
        return cls(mask, q, np.zeros(shape), bc_mode)

    @classmethod
    def constrained(
        cls, mask: DomainMask, q: int, values: np.ndarray, bc_mode: BCMode
    ) -> "FormField":
        """Field with every constrained entry set to exactly 0.0."""
        free = mask.free_mask(q, bc_mode)
        return cls(mask, q, np.where(free, values, 0.0), bc_mode)

    def component(self, index: MultiIndex | tuple[int, ...]) -> np.ndarray:
        if not isinstance(index, MultiIndex):
            index = MultiIndex(tuple(index), self.mask.N)
        return self.components[rank_of(index)]

    def respects_bc(self, bc_mode: BCMode | None = None) -> bool:
        """True when every constrained entry of ``bc_mode`` is exactly zero."""
        free = self.mask.free_mask(self.q, bc_mode or self.bc_mode)
        return bool(np.all(self.components[~free] == 0.0))

    def norm(self) -> float:
        return math.sqrt(inner_product(self, self))

    def __add__(self, other: "FormField") -> "FormField":
        _check_compatible(self, other)
        return FormField(self.mask, self.q, self.components + other.components, _joint_mode(self, other))

    def __sub__(self, other: "FormField") -> "FormField":
        _check_compatible(self, other)
        return FormField(self.mask, self.q, self.components - other.components, _joint_mode(self, other))

    def scaled(self, factor: float) -> "FormField":
        return FormField(self.mask, self.q, factor * self.components, self.bc_mode)


@dataclass(frozen=True, eq=False)
class RowField:
    """N rows of q-forms sharing mask and bc_mode; values shape (N, C(N,q), *shape)."""

    mask: DomainMask
    values: np.ndarray
    bc_mode: BCMode = BCMode.NONE
    q: int = 1

    def __post_init__(self) -> None:
        expected = (self.mask.N, component_count(self.mask.N, self.q)) + self.mask.shape
        if self.values.shape != expected:
            raise IncompatibleFieldsError(
                f"{type(self).__name__} values have shape {self.values.shape}, expected {expected}"
            )
        object.__setattr__(self, "values", _as_array(self.values))
        object.__setattr__(self, "bc_mode", BCMode(self.bc_mode))

    @property
    def rows(self) -> tuple[FormField, ...]:
        return tuple(FormField(self.mask, self.q, row, self.bc_mode) for row in self.values)

    @classmethod
    def from_rows(cls, rows: list[FormField] | tuple[FormField, ...]) -> "RowField":
        if not rows:
            raise IncompatibleFieldsError("At least one row required")
        mask, q, mode = rows[0].mask, rows[0].q, rows[0].bc_mode
        for row in rows:
            if row.mask is not mask or row.q != q:
                raise IncompatibleFieldsError("Rows must share mask and degree")
            if row.bc_mode != mode:
                mode = BCMode.NONE
        return cls(mask, np.stack([row.components for row in rows]), mode, q)

    @classmethod
    def zeros(cls, mask: DomainMask, bc_mode: BCMode = BCMode.NONE) -> "RowField":
        shape = (mask.N, component_count(mask.N, cls.q)) + mask.shape
        return cls(mask, np.zeros(shape), bc_mode)

    def norm(self) -> float:
        return math.sqrt(inner_product(self, self))

    def respects_bc(self, bc_mode: BCMode | None = None) -> bool:
        free = self.mask.free_mask(self.q, bc_mode or self.bc_mode)
        return bool(np.all(self.values[:, ~free] == 0.0))

    def _like(self, values: np.ndarray, bc_mode: BCMode) -> "RowField":
        return replace(self, values=values, bc_mode=bc_mode)

    def __add__(self, other: "RowField") -> "RowField":
        _check_compatible(self, other)
        return self._like(self.values + other.values, _joint_mode(self, other))

    def __sub__(self, other: "RowField") -> "RowField":
        _check_compatible(self, other)
        return self._like(self.values - other.values, _joint_mode(self, other))

    def scaled(self, factor: float) -> "RowField":
        return self._like(factor * self.values, self.bc_mode)


@dataclass(frozen=True, eq=False)
class VectorField(RowField):
    """N-vector of 0-forms (v = (v_1, ..., v_N))."""

    q: int = 0

    @property
    def scalars(self) -> np.ndarray:
        """Component grids v_n, shape (N, *shape)."""
        return self.values[:, 0]


@dataclass(frozen=True, eq=False)
class TensorField(RowField):
    """N×N matrix field; row n is the 1-form T_n."""

    q: int = 1

    def matrix_at(self, vertex: tuple[int, ...]) -> np.ndarray:
        return self.values[(slice(None), slice(None)) + tuple(vertex)]


@dataclass(frozen=True, eq=False)
class CurlField(RowField):
    """N×(N-1)N/2 field: entry (i, (j,k)) with j<k; row-wise degree-2 forms."""

    q: int = 2


AnyField = Union[FormField, RowField]


def _payload(f: AnyField) -> np.ndarray:
    return f.components if isinstance(f, FormField) else f.values


def _check_compatible(a: AnyField, b: AnyField) -> None:
    if a.mask is not b.mask:
        raise IncompatibleFieldsError("Fields live on different masks")
    if type(a) is not type(b) or a.q != b.q:
        raise IncompatibleFieldsError(
            f"Cannot combine {type(a).__name__}(q={a.q}) with {type(b).__name__}(q={b.q})"
        )


# Nested BC spaces, smallest first.
_MODE_ORDER = (BCMode.FULL_DIRICHLET, BCMode.CELLULAR, BCMode.TANGENTIAL, BCMode.NONE)


def _joint_mode(a: AnyField, b: AnyField) -> BCMode:
    return max(a.bc_mode, b.bc_mode, key=_MODE_ORDER.index)


def dot(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean dot product; exactly rounded in deterministic-sum mode."""
    if get_settings().deterministic_sum:
        return math.fsum(np.multiply(a, b).ravel().tolist())
    return float(np.dot(np.ravel(a), np.ravel(b)))


def inner_product(e: AnyField, f: AnyField) -> float:
    """L² scalar product h^N Σ E·H over vertices and components."""
    _check_compatible(e, f)
    return e.mask.cell_volume * dot(_payload(e), _payload(f))


def random_field(
    mask: DomainMask,
    q: int,
    bc_mode: BCMode = BCMode.FULL_DIRICHLET,
    seed: int = 0,
) -> FormField:
    """Uniform [-1, 1] values on free DOFs, exact zeros elsewhere."""
    rng = np.random.default_rng(seed)
    shape = (component_count(mask.N, q),) + mask.shape
    return FormField.constrained(mask, q, rng.uniform(-1.0, 1.0, size=shape), BCMode(bc_mode))


def random_vector(
    mask: DomainMask, bc_mode: BCMode = BCMode.FULL_DIRICHLET, seed: int = 0
) -> VectorField:
    """Random N-vector of 0-forms."""
    rng = np.random.default_rng(seed)
    free = mask.free_mask(0, bc_mode)
    values = rng.uniform(-1.0, 1.0, size=(mask.N, 1) + mask.shape)
    return VectorField(mask, np.where(free[np.newaxis], values, 0.0), BCMode(bc_mode))


class TensorKind(str, Enum):
    """Random tensor families used by the verification campaigns."""
    GENERIC = "generic"
    SKEW = "skew"
    SYMMETRIC = "symmetric"


def random_tensor(
    mask: DomainMask,
    bc_mode: BCMode = BCMode.FULL_DIRICHLET,
    seed: int = 0,
    kind: TensorKind = TensorKind.GENERIC,
) -> TensorField:
    """Random tensor in the BC space; skew/symmetric variants stay in the space."""
    rng = np.random.default_rng(seed)
    n = mask.N
    free = mask.free_mask(1, bc_mode)
    values = rng.uniform(-1.0, 1.0, size=(n, n) + mask.shape)
    kind = TensorKind(kind)
    if kind != TensorKind.GENERIC:
        sign = -1.0 if kind == TensorKind.SKEW else 1.0
        values = 0.5 * (values + sign * values.swapaxes(0, 1))
        # both (i,k) and (k,i) must be free so the pointwise symmetry survives
        free = free[np.newaxis] & free[:, np.newaxis]
    else:
        free = np.broadcast_to(free, values.shape)
    return TensorField(mask, np.where(free, values, 0.0), BCMode(bc_mode))


def _transpose_preserves_bc(mask: DomainMask, bc_mode: BCMode) -> bool:
    free = mask.free_mask(1, bc_mode)
    return bool(np.all(free == free[:1]))


def sym_part(t: TensorField) -> TensorField:
    """(T + Tᵀ)/2 pointwise."""
    values = 0.5 * (t.values + t.values.swapaxes(0, 1))
    mode = t.bc_mode if _transpose_preserves_bc(t.mask, t.bc_mode) else BCMode.NONE
    return TensorField(t.mask, values, mode)


def skew_part(t: TensorField) -> TensorField:
    """(T − Tᵀ)/2 pointwise."""
    values = 0.5 * (t.values - t.values.swapaxes(0, 1))
    mode = t.bc_mode if _transpose_preserves_bc(t.mask, t.bc_mode) else BCMode.NONE
    return TensorField(t.mask, values, mode)


class FieldSpace:
    """Free-DOF coordinates of a (row-stacked) q-form space.

    ``pack`` gathers free entries into a flat vector; ``unpack`` scatters a
    vector back with exact zeros on constrained entries. Solvers work on these
    vectors with the Euclidean product; the mass factor h^N cancels.
    """

    def __init__(self, mask: DomainMask, q: int, bc_mode: BCMode, rows: int | None = None):
        self.mask = mask
        self.q = q
        self.bc_mode = BCMode(bc_mode)
        self.rows = rows
        free = mask.free_mask(q, self.bc_mode)
        if rows is not None:
            free = np.broadcast_to(free, (rows,) + free.shape)
        self.free = free
        self.dim = int(free.sum())

    @property
    def array_shape(self) -> tuple[int, ...]:
        return self.free.shape

    def pack(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64)[self.free]

    def unpack(self, vector: np.ndarray) -> np.ndarray:
        out = np.zeros(self.array_shape)
        out[self.free] = vector
        return out

    def project(self, values: np.ndarray) -> np.ndarray:
        return np.where(self.free, values, 0.0)
