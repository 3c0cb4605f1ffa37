"""Tests for domain masks, field containers and the inner product."""

import math

import numpy as np
import pytest

from src.config.settings import overridden_settings
from src.services.grid_fields import (
    BCMode,
    FieldSpace,
    FormField,
    TensorField,
    TensorKind,
    VertexClass,
    inner_product,
    make_domain,
    normal_axes,
    random_field,
    random_tensor,
    random_vector,
    skew_part,
    sym_part,
)
from src.utils.error_handler import DegreeError, IncompatibleFieldsError, InvalidDomainError


@pytest.fixture
def small_square():
    """Unit square with 5 vertices per axis (h = 1/4)."""
    return make_domain("box", (5, 5), 0.25)


class TestMakeDomain:
    """Tests for make_domain and vertex classification."""

    def test_box_classification(self, small_square):
        """Test that the box has a 3×3 interior and a 16-vertex boundary ring."""
        assert small_square.interior.sum() == 9
        assert small_square.boundary.sum() == 16
        assert small_square.classification[2, 2] == VertexClass.INTERIOR
        assert small_square.classification[0, 3] == VertexClass.BOUNDARY
        assert small_square.boundary_components == 1

    def test_sub_box_has_exterior_vertices(self):
        """Test that a box geometry smaller than the grid leaves exterior vertices."""
        mask = make_domain("box", (9, 9), 0.125, geometry={"lower": [0.25, 0.25], "upper": [0.75, 0.75]})

        assert mask.classification[0, 0] == VertexClass.EXTERIOR
        assert mask.inside.sum() == 25
        assert mask.interior.sum() == 9

    def test_annulus_has_two_boundary_components(self, annulus):
        """Test that the annulus boundary splits into inner and outer circles."""
        assert annulus.boundary_components == 2
        center = (16, 16)
        assert annulus.classification[center] == VertexClass.EXTERIOR

    def test_shell_has_two_boundary_components(self):
        """Test that the spherical shell has inner and outer boundary surfaces."""
        mask = make_domain("shell", (17, 17, 17), 1.0 / 16, geometry={"radii": (0.2, 0.45)})
        assert mask.boundary_components == 2

    def test_ball_and_torus_have_connected_boundary(self):
        """Test that ball and solid torus boundaries are connected."""
        ball = make_domain("ball", (17, 17, 17), 1.0 / 16)
        torus = make_domain("solid_torus", (21, 21, 21), 1.0 / 20)

        assert ball.boundary_components == 1
        assert torus.boundary_components == 1

    def test_boundary_needs_an_axis_neighbour_outside(self):
        """Test that a vertex whose only outside neighbour is diagonal is interior."""
        disk = make_domain("ball", (9, 9), 1.0 / 8, geometry={"radius": 0.4})

        # offset (−2, −1) from the centre: axis neighbours inside, (−3, −2) outside
        assert disk.classification[2, 3] == VertexClass.INTERIOR
        # offset (−2, −2): the neighbour (−3, −2) is outside
        assert disk.classification[2, 2] == VertexClass.BOUNDARY
        assert disk.boundary_components == 1

    def test_normal_axes_of_sub_box(self):
        """Test that normal axes name the directions that leave the domain."""
        mask = make_domain("box", (9, 9), 0.125, geometry={"lower": [0.25, 0.25], "upper": [0.75, 0.75]})
        normals = normal_axes(mask.inside)

        assert normals[0][2, 4] and not normals[1][2, 4]
        assert normals[0][2, 2] and normals[1][2, 2]
        assert not normals.any(axis=0)[4, 4]
        np.testing.assert_array_equal(normals.any(axis=0), mask.boundary)

    @pytest.mark.parametrize("resolution", [9, 17, 33])
    def test_disk_boundary_is_connected(self, resolution):
        """Test that staircase circles form one boundary component at every resolution."""
        disk = make_domain("ball", (resolution, resolution), 1.0 / (resolution - 1))
        assert disk.boundary_components == 1

    def test_annulus_requires_two_dimensions(self):
        """Test that annulus in N=3 is rejected."""
        with pytest.raises(InvalidDomainError):
            make_domain("annulus", (9, 9, 9), 0.125)

    def test_too_coarse_resolution(self):
        """Test that fewer than 3 vertices per axis is rejected."""
        with pytest.raises(InvalidDomainError):
            make_domain("box", (2, 5), 0.25)

    def test_empty_domain(self):
        """Test that a ball too small to contain a cube is rejected."""
        with pytest.raises(InvalidDomainError):
            make_domain("ball", (5, 5), 0.25, geometry={"radius": 0.1})

    def test_descriptor(self, small_square):
        """Test that the descriptor summarises the mask."""
        descriptor = small_square.descriptor()

        assert descriptor["kind"] == "box"
        assert descriptor["N"] == 2
        assert descriptor["interior_vertices"] == 9
        assert descriptor["boundary_components"] == 1


class TestFreeMask:
    """Tests for boundary-condition masks."""

    def test_scalar_full_dirichlet_is_interior(self, small_square):
        """Test that free 0-form DOFs are the interior vertices."""
        free = small_square.free_mask(0, BCMode.FULL_DIRICHLET)
        np.testing.assert_array_equal(free[0], small_square.interior)

    def test_cellular_edges(self, small_square):
        """Test that cellular x-edges are free iff both adjacent squares are inside."""
        free = small_square.free_mask(1, BCMode.CELLULAR)

        # edges (i, j) -> (i+1, j) for i in 0..3 and j in 1..3
        assert free[0].sum() == 12
        assert not free[0][0, 0]
        assert free[0][0, 2]
        assert not free[0][4, 2]

    def test_tangential_frees_normal_components_on_box_faces(self, small_square):
        """Test that a face vertex keeps its normal component and loses the tangential one."""
        free = small_square.free_mask(1, BCMode.TANGENTIAL)

        # x-faces i = 0 and i = 4 have normal direction x
        assert free[0][4, 2]
        assert free[0][0, 2]
        assert not free[1][4, 2]
        assert not free[1][0, 2]
        # y-faces
        assert free[1][2, 0]
        assert not free[0][2, 4]
        # corners have both axes normal
        assert free[0][0, 0] and free[1][4, 4]
        # 9 interior vertices plus the 10 vertices on the two x-faces
        assert free[0].sum() == 19

    def test_tangential_scalars_vanish_on_boundary(self, small_square):
        """Test that tangential 0-forms are free exactly on interior vertices."""
        free = small_square.free_mask(0, BCMode.TANGENTIAL)
        np.testing.assert_array_equal(free[0], small_square.interior)

    def test_spaces_are_nested(self, annulus):
        """Test full_dirichlet ⊂ cellular ⊂ tangential ⊂ none for every degree."""
        order = [BCMode.FULL_DIRICHLET, BCMode.CELLULAR, BCMode.TANGENTIAL, BCMode.NONE]
        for q in range(3):
            for smaller, larger in zip(order, order[1:]):
                small = annulus.free_mask(q, smaller)
                large = annulus.free_mask(q, larger)
                assert np.all(large[small]), (q, smaller, larger)

    def test_full_dirichlet_is_subset_of_cellular(self, small_square):
        """Test that full Dirichlet additionally needs an interior base vertex."""
        cellular = small_square.free_mask(1, BCMode.CELLULAR)
        full = small_square.free_mask(1, BCMode.FULL_DIRICHLET)

        assert full[0].sum() == 9
        assert np.all(cellular[full])

    def test_none_mode_is_inside(self, small_square):
        """Test that unconstrained fields are free on every inside vertex."""
        free = small_square.free_mask(2, BCMode.NONE)
        assert free.sum() == 25

    def test_mask_is_read_only(self, small_square):
        """Test that cached masks cannot be mutated."""
        free = small_square.free_mask(1, BCMode.TANGENTIAL)
        with pytest.raises(ValueError):
            free[0, 1, 1] = False


class TestFormField:
    """Tests for FormField and the L² inner product."""

    def test_shape_is_checked(self, small_square):
        """Test that the component count must be C(N,q)."""
        with pytest.raises(IncompatibleFieldsError):
            FormField(small_square, 1, np.zeros((1, 5, 5)))

    def test_degree_is_checked(self, small_square):
        """Test that degrees above N are rejected."""
        with pytest.raises(DegreeError):
            FormField(small_square, 3, np.zeros((1, 5, 5)))

    def test_inner_product_weights_by_cell_volume(self, small_square):
        """Test that the inner product is h^N Σ E·H."""
        ones = FormField(small_square, 0, np.ones((1, 5, 5)))
        assert inner_product(ones, ones) == pytest.approx(25 * 0.25**2)
        assert ones.norm() == pytest.approx(math.sqrt(25) * 0.25)

    def test_random_field_respects_bc(self, unit_cube):
        """Test that random fields vanish exactly on constrained entries."""
        for q in range(4):
            for mode in (BCMode.FULL_DIRICHLET, BCMode.CELLULAR, BCMode.TANGENTIAL):
                e = random_field(unit_cube, q, mode, seed=3)
                assert e.respects_bc()
                assert np.all(e.components[~unit_cube.free_mask(q, mode)] == 0.0)

    def test_random_field_is_deterministic(self, unit_square):
        """Test that equal seeds give identical fields."""
        a = random_field(unit_square, 1, seed=7)
        b = random_field(unit_square, 1, seed=7)
        c = random_field(unit_square, 1, seed=8)

        np.testing.assert_array_equal(a.components, b.components)
        assert not np.array_equal(a.components, c.components)

    def test_different_masks_cannot_be_combined(self, unit_square):
        """Test that fields on distinct masks are incompatible."""
        other = make_domain("box", (9, 9), 1.0 / 8)
        with pytest.raises(IncompatibleFieldsError):
            random_field(unit_square, 1) + random_field(other, 1)

    def test_sum_of_modes_widens(self, unit_square):
        """Test that a sum carries the larger of the two nested spaces."""
        a = random_field(unit_square, 1, BCMode.FULL_DIRICHLET)
        b = random_field(unit_square, 1, BCMode.TANGENTIAL)
        c = random_field(unit_square, 1, BCMode.CELLULAR)

        assert (a + b).bc_mode == BCMode.TANGENTIAL
        assert (a + c).bc_mode == BCMode.CELLULAR
        assert (c + b).bc_mode == BCMode.TANGENTIAL
        assert (c + random_field(unit_square, 1, BCMode.NONE)).bc_mode == BCMode.NONE

    def test_random_tangential_field_on_box_faces(self, unit_square):
        """Test that on box faces only the normal component of a tangential 1-form is nonzero."""
        e = random_field(unit_square, 1, BCMode.TANGENTIAL, seed=12)
        x_part, y_part = e.components
        faces = slice(1, 8)

        for i in (0, 8):
            assert np.all(y_part[i, faces] == 0.0)
            assert np.all(x_part[i, faces] != 0.0)
        for j in (0, 8):
            assert np.all(x_part[faces, j] == 0.0)
            assert np.all(y_part[faces, j] != 0.0)

    def test_components_are_read_only(self, unit_square):
        """Test that field storage is immutable."""
        e = random_field(unit_square, 1)
        with pytest.raises(ValueError):
            e.components[0, 1, 1] = 1.0

    def test_deterministic_sum_matches_fsum(self, unit_square):
        """Test that deterministic mode sums exactly rounded."""
        e = random_field(unit_square, 1, seed=11)
        with overridden_settings(deterministic_sum=True):
            actual = inner_product(e, e)

        expected = unit_square.cell_volume * math.fsum((e.components**2).ravel().tolist())
        assert actual == expected


class TestTensorFields:
    """Tests for vector and tensor fields."""

    def test_vector_layout(self, unit_cube):
        """Test that a vector field stores N scalar rows."""
        v = random_vector(unit_cube, seed=1)
        assert v.values.shape == (3, 1, 7, 7, 7)
        assert v.scalars.shape == (3, 7, 7, 7)
        assert v.respects_bc()

    def test_sym_plus_skew(self, unit_square):
        """Test that sym T + skew T = T with the expected symmetries."""
        t = random_tensor(unit_square, seed=2)
        s, k = sym_part(t), skew_part(t)

        np.testing.assert_allclose((s + k).values, t.values)
        np.testing.assert_allclose(s.values, s.values.swapaxes(0, 1))
        np.testing.assert_allclose(k.values, -k.values.swapaxes(0, 1))

    def test_skew_family_has_zero_sym(self, unit_square):
        """Test that skew tensors have vanishing symmetric part."""
        t = random_tensor(unit_square, BCMode.TANGENTIAL, seed=4, kind=TensorKind.SKEW)
        assert sym_part(t).norm() == 0.0
        assert t.respects_bc()

    def test_matrix_at(self, unit_square):
        """Test that matrix_at returns the N×N matrix at one vertex."""
        t = random_tensor(unit_square, seed=5)
        matrix = t.matrix_at((3, 4))
        assert matrix.shape == (2, 2)
        assert matrix[1, 0] == t.values[1, 0, 3, 4]

    def test_tensor_shape_is_checked(self, unit_square):
        """Test that TensorField rejects wrong row counts."""
        with pytest.raises(IncompatibleFieldsError):
            TensorField(unit_square, np.zeros((3, 2, 9, 9)))


class TestFieldSpace:
    """Tests for free-DOF packing."""

    def test_pack_unpack(self, unit_square):
        """Test that unpack(pack(E)) = E on BC-respecting fields."""
        e = random_field(unit_square, 1, BCMode.TANGENTIAL, seed=9)
        space = FieldSpace(unit_square, 1, BCMode.TANGENTIAL)

        packed = space.pack(e.components)
        assert packed.shape == (space.dim,)
        np.testing.assert_array_equal(space.unpack(packed), e.components)

    def test_row_space_dimension(self, unit_square):
        """Test that row-stacked spaces have N times the dimension."""
        single = FieldSpace(unit_square, 1, BCMode.FULL_DIRICHLET)
        stacked = FieldSpace(unit_square, 1, BCMode.FULL_DIRICHLET, rows=2)
        assert stacked.dim == 2 * single.dim
