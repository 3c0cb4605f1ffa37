"""Tests for Poincaré/Maxwell constants, harmonic forms and the sharp constant."""

import math

import numpy as np
import pytest

from src.services.diff_ops import tensor_curl
from src.services.grid_fields import BCMode, TensorKind, make_domain, random_tensor
from src.services.solvers import dense_eigen_oracle
from src.services.spectral_constants import (
    c_hat_from,
    compute_constants,
    default_shift,
    harmonic_dimension,
    hodge_form_operator,
    poincare_q_constant,
    rayleigh_quotient,
    sharp_constant,
    spectral_mode,
    tensor_form_operator,
    tensor_mode,
)
from src.utils.error_handler import DegreeError


def dirichlet_eigenvalue_1d(n: int, h: float) -> float:
    """Lowest eigenvalue of the 1D second difference with n vertices including both ends."""
    return (2.0 - 2.0 * math.cos(math.pi / (n - 1))) / h**2


class TestSpectralMode:
    """Tests for the BC space of spectral problems."""

    def test_scalars_vanish_on_the_boundary(self):
        """Test that degree 0 uses the full Dirichlet potentials in both modes."""
        assert spectral_mode(0, BCMode.FULL_DIRICHLET) == BCMode.FULL_DIRICHLET
        assert spectral_mode(0, BCMode.TANGENTIAL) == BCMode.FULL_DIRICHLET

    def test_forms_are_cellular(self):
        """Test that degrees >= 1 use the cellular subcomplex."""
        assert spectral_mode(1, BCMode.FULL_DIRICHLET) == BCMode.CELLULAR
        assert spectral_mode(2, "tangential") == BCMode.CELLULAR

    def test_tensor_mode(self):
        """Test that the sharp constant keeps full_dirichlet and uses cellular otherwise."""
        assert tensor_mode(BCMode.FULL_DIRICHLET) == BCMode.FULL_DIRICHLET
        assert tensor_mode(BCMode.TANGENTIAL) == BCMode.CELLULAR

    def test_unconstrained_is_rejected(self):
        """Test that spectral problems need a boundary condition."""
        with pytest.raises(DegreeError):
            spectral_mode(1, BCMode.NONE)

    def test_default_shift(self, unit_square):
        """Test that the shift is the inverse squared extent."""
        assert default_shift(unit_square) == pytest.approx(1.0)


class TestPoincareConstants:
    """Tests for c_p and c_m on the unit square."""

    def test_poincare_constant_matches_tensor_product_spectrum(self, unit_square):
        """Test that c_p = (2 λ_1D)^{-1/2} on a 9×9 square."""
        result = poincare_q_constant(unit_square, 0)
        expected = 1.0 / math.sqrt(2.0 * dirichlet_eigenvalue_1d(9, 1.0 / 8))

        assert not result.flagged
        assert result.constant == pytest.approx(expected, rel=1e-8)

    def test_poincare_constant_on_unit_cube(self, unit_cube):
        """Test that c_p = (3 λ_1D)^{-1/2} on a 7×7×7 cube."""
        result = poincare_q_constant(unit_cube, 0)
        expected = 1.0 / math.sqrt(3.0 * dirichlet_eigenvalue_1d(7, 1.0 / 6))

        assert not result.flagged
        assert result.constant == pytest.approx(expected, rel=1e-8)

    def test_maxwell_constant_matches_tensor_product_spectrum(self, unit_square):
        """Test that c_m = λ_1D^{-1/2}, close to 1/π."""
        result = poincare_q_constant(unit_square, 1)
        expected = 1.0 / math.sqrt(dirichlet_eigenvalue_1d(9, 1.0 / 8))

        assert result.harmonic.dimension == 0
        assert result.constant == pytest.approx(expected, rel=1e-6)
        assert result.constant == pytest.approx(1.0 / math.pi, rel=0.02)

    @pytest.mark.slow
    def test_poincare_constant_converges(self):
        """Test that c_p approaches 1/(π√2) on a 65×65 square."""
        mask = make_domain("box", (65, 65), 1.0 / 64)
        result = poincare_q_constant(mask, 0)

        assert result.constant == pytest.approx(1.0 / (math.pi * math.sqrt(2.0)), rel=1e-3)

    def test_oracle_agrees(self, unit_square):
        """Test that the dense oracle reproduces λ_min of the degree-1 form."""
        operator, _ = hodge_form_operator(unit_square, 1)
        oracle = dense_eigen_oracle(operator)
        result = poincare_q_constant(unit_square, 1)

        assert oracle.symmetry_defect <= 1e-9
        assert result.eigenvalue == pytest.approx(oracle.eigenvalues[0], rel=1e-8)

    def test_hodge_operator_is_symmetric_positive(self, unit_cube):
        """Test that the Hodge form is symmetric and nonnegative on a small cube."""
        operator, _ = hodge_form_operator(unit_cube, 2)
        oracle = dense_eigen_oracle(operator)

        assert oracle.symmetry_defect <= 1e-9 * np.max(np.abs(oracle.eigenvalues))
        assert oracle.eigenvalues[0] > -1e-9

    def test_c_hat(self):
        """Test that c_hat = max{2, √5 c_m}."""
        assert c_hat_from(0.5) == 2.0
        assert c_hat_from(1.0) == pytest.approx(math.sqrt(5.0))


class TestHarmonicDimension:
    """Tests for the harmonic Dirichlet form counts."""

    def test_box_has_no_harmonic_one_forms(self, unit_square):
        """Test that dim H^1 = 0 on the square with a clear gap."""
        report = harmonic_dimension(unit_square, 1)

        assert report.dimension == 0
        assert report.reliable

    def test_top_degree_has_constants(self, unit_square):
        """Test that degree-N forms carry the constants."""
        report = harmonic_dimension(unit_square, 2)
        assert report.dimension == 1

    def test_annulus_has_one_harmonic_one_form(self, annulus):
        """Test that the annulus hole produces one harmonic 1-form."""
        report = harmonic_dimension(annulus, 1)

        assert report.dimension == 1
        assert report.reliable
        assert report.gap_ratio >= 10
        assert report.basis.shape[1] == 1

    def test_annulus_maxwell_constant_deflates_harmonic_form(self, annulus):
        """Test that c_m on the annulus is finite after deflating the harmonic form."""
        result = poincare_q_constant(annulus, 1)

        assert result.eigen.deflation_dimension == 1
        assert math.isfinite(result.constant)
        assert result.eigenvalue > result.harmonic.threshold

    def test_ball_has_only_top_degree_constants(self):
        """Test that the ball carries harmonic forms in degree N only."""
        ball = make_domain("ball", (9, 9, 9), 1.0 / 8)

        assert [harmonic_dimension(ball, q).dimension for q in range(4)] == [0, 0, 0, 1]

    @pytest.mark.slow
    def test_shell_has_one_harmonic_one_form(self):
        """Test that the two boundary spheres of the shell give dim H^1 = 1 and dim H^2 = 0."""
        shell = make_domain("shell", (17, 17, 17), 1.0 / 16, geometry={"radii": (0.2, 0.45)})
        assert shell.boundary_components == 2

        first = harmonic_dimension(shell, 1)
        assert first.dimension == 1
        assert first.reliable
        assert harmonic_dimension(shell, 2).dimension == 0

    @pytest.mark.parametrize(
        ("kind", "shape", "geometry"),
        [
            ("box", (9, 9), None),
            ("ball", (17, 17), None),
            ("box", (7, 7, 7), None),
            ("ball", (11, 11, 11), None),
            ("box", (9, 9), {"lower": [0.25, 0.125], "upper": [0.875, 0.75]}),
        ],
    )
    def test_connected_boundary_has_no_harmonic_one_forms(self, kind, shape, geometry):
        """Test that dim H^1 = 0 whenever the boundary is connected."""
        mask = make_domain(kind, shape, 1.0 / (shape[0] - 1), geometry=geometry)
        assert mask.boundary_components == 1

        report = harmonic_dimension(mask, 1)
        assert report.dimension == 0
        assert report.reliable

    @pytest.mark.slow
    def test_solid_torus(self):
        """Test that the solid torus has dim H^1 = 0 and dim H^2 = 1."""
        mask = make_domain("solid_torus", (21, 21, 21), 1.0 / 20)

        assert harmonic_dimension(mask, 1).dimension == 0
        assert harmonic_dimension(mask, 2).dimension == 1


class TestComputeConstants:
    """Tests for the constants record."""

    def test_record(self, unit_square):
        """Test that the record holds c_p < c_m and c_hat = 2 on the square."""
        record = compute_constants(unit_square)

        assert record.c_p < record.c_m
        assert record.c_hat == 2.0
        assert record.harmonic_dims == {0: 0, 1: 0}
        assert record.connected_boundary
        assert not record.flagged

    def test_to_dict_uses_string_keys(self, unit_square):
        """Test that serialised dimension maps are keyed by strings."""
        data = compute_constants(unit_square, degrees=[2]).to_dict()

        assert data["harmonic_dims"] == {"0": 0, "1": 0, "2": 1}
        assert data["bc_mode"] == "full_dirichlet"


class TestSharpConstant:
    """Tests for the sharp constant of the main inequality."""

    def test_sharp_below_c_hat(self, unit_square):
        """Test that 1 ≤ c_sharp ≤ c_hat on the square."""
        record = compute_constants(unit_square)
        result = sharp_constant(unit_square)

        assert result.eigen.converged
        assert result.eigenvalue <= result.test_quotient + 1e-8
        assert 1.0 <= result.c_sharp <= record.c_hat

    def test_rayleigh_quotient_of_skew_tensor(self, unit_square):
        """Test that skew tensors only see the Curl term."""
        t = random_tensor(unit_square, BCMode.TANGENTIAL, seed=3, kind=TensorKind.SKEW)
        expected = tensor_curl(t).norm() ** 2 / t.norm() ** 2

        assert rayleigh_quotient(t) == pytest.approx(expected, rel=1e-12)
        assert rayleigh_quotient(t) > 0

    def test_zero_tensor_quotient(self, unit_square):
        """Test that the zero field has quotient 0."""
        t = random_tensor(unit_square, seed=1).scaled(0.0)
        assert rayleigh_quotient(t) == 0.0

    def test_sharp_constant_matches_dense_oracle(self, unit_square):
        """Test that the iterative λ_min of the tensor form equals the dense spectrum's."""
        operator, _ = tensor_form_operator(unit_square, BCMode.FULL_DIRICHLET)
        oracle = dense_eigen_oracle(operator)
        result = sharp_constant(unit_square)

        assert result.eigen.method == "lobpcg-chebyshev"
        assert oracle.symmetry_defect <= 1e-9 * np.max(np.abs(oracle.eigenvalues))
        assert result.eigenvalue == pytest.approx(oracle.eigenvalues[0], rel=1e-6)
        assert np.all(result.eigen.residuals <= result.eigen.residual_bounds)

    def test_tangential_mode_uses_cellular_tensors(self, unit_square):
        """Test that the tangential sharp constant is posed on the cellular tensor space."""
        operator, space = tensor_form_operator(unit_square, BCMode.CELLULAR)
        oracle = dense_eigen_oracle(operator)
        result = sharp_constant(unit_square, BCMode.TANGENTIAL)

        assert space.dim > tensor_form_operator(unit_square, BCMode.FULL_DIRICHLET)[1].dim
        assert result.eigenvalue == pytest.approx(oracle.eigenvalues[0], rel=1e-6)
