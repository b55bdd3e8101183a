"""Tests for periodic grid functions"""
import numpy as np
import pytest

from homlab.torus.fields import (
    PeriodicGrid,
    ScalarField,
    SymMatrixField,
    derivative,
    integrate,
    l2_norm,
    restrict,
    second_derivative,
    shift_reflect,
)
from homlab.utils.error_handling import SPDViolationError, ValidationError


class TestPeriodicGrid:
    """Test grid construction"""

    @pytest.mark.parametrize('dim, resolution', [(0, 16), (4, 16), (2, 3), (2, 15), (1, 2)])
    def test_rejects_bad_grids(self, dim, resolution):
        """Test dimension and even-resolution checks"""
        with pytest.raises(ValidationError):
            PeriodicGrid(dim, resolution)

    def test_coordinates(self):
        """Test node coordinates start at zero and exclude one"""
        grid = PeriodicGrid(2, 8)
        y1, y2 = grid.coordinates()
        assert y1.shape == (8, 8)
        assert y1[0, 0] == 0.0
        assert y1[-1, 0] == pytest.approx(7 / 8)
        assert np.all(y2[:, 3] == 3 / 8)
        assert grid.cell_volume == pytest.approx(1 / 64)


class TestScalarField:
    """Test scalar grid functions"""

    def test_rejects_non_finite_values(self, grid16):
        """Test NaN values are refused"""
        values = np.zeros(grid16.shape)
        values[2, 3] = np.nan
        with pytest.raises(ValidationError):
            ScalarField(grid16, values)

    def test_reshapes_flat_values(self, grid16):
        """Test flat arrays of the right size are accepted"""
        field = ScalarField(grid16, np.arange(grid16.size, dtype=float))
        assert field.values.shape == grid16.shape

    def test_arithmetic_stays_on_grid(self, grid16):
        """Test mixing grids is an error"""
        a = ScalarField.constant(grid16, 1.0)
        b = ScalarField.constant(PeriodicGrid(2, 32), 1.0)
        with pytest.raises(ValidationError):
            a + b

    def test_integrate(self, grid16):
        """Test the rectangle rule on constants and trigonometric functions"""
        assert integrate(ScalarField.constant(grid16, 2.5)) == pytest.approx(2.5)
        field = ScalarField.from_function(grid16, lambda y1, y2: np.sin(2 * np.pi * y1) * np.cos(2 * np.pi * y2))
        assert abs(integrate(field)) < 1e-15
        assert l2_norm(ScalarField.constant(grid16, 3.0)) == pytest.approx(3.0)


class TestDifferences:
    """Test centered differences"""

    def test_first_difference_of_sine(self):
        """Test D1 sin(2 pi y) = sin(2 pi h)/h cos(2 pi y) exactly"""
        grid = PeriodicGrid(1, 32)
        h = grid.spacing
        f = ScalarField.from_function(grid, lambda y: np.sin(2 * np.pi * y))
        expected = np.sin(2 * np.pi * h) / h * np.cos(2 * np.pi * grid.axis_coordinates())
        np.testing.assert_allclose(derivative(f, 0).values, expected, atol=1e-12)

    def test_second_difference_of_sine(self):
        """Test the 3-point symbol (2 cos(2 pi h) - 2)/h^2"""
        grid = PeriodicGrid(1, 32)
        h = grid.spacing
        f = ScalarField.from_function(grid, lambda y: np.sin(2 * np.pi * y))
        symbol = (2 * np.cos(2 * np.pi * h) - 2) / h ** 2
        np.testing.assert_allclose(second_derivative(f, 0, 0).values, symbol * f.values, atol=1e-10)

    def test_first_difference_is_second_order(self):
        """Test the derivative error falls like h^2 over N = 16, 32, 64"""
        resolutions = [16, 32, 64]
        errors = []
        for N in resolutions:
            grid = PeriodicGrid(2, N)
            y1, y2 = grid.coordinates()
            f = ScalarField(grid, np.sin(2 * np.pi * y1) * np.cos(4 * np.pi * y2))
            exact = -4 * np.pi * np.sin(2 * np.pi * y1) * np.sin(4 * np.pi * y2)
            errors.append(np.max(np.abs(derivative(f, 1).values - exact)))
        slope = -np.polyfit(np.log(resolutions), np.log(errors), 1)[0]
        assert 1.9 <= slope <= 2.1

    def test_mixed_difference_is_symmetric(self, grid16):
        """Test the mixed difference does not depend on argument order"""
        f = ScalarField.from_function(grid16, lambda y1, y2: np.exp(np.sin(2 * np.pi * y1) * np.cos(2 * np.pi * y2)))
        np.testing.assert_array_equal(second_derivative(f, 0, 1).values,
                                      second_derivative(f, 1, 0).values)

    def test_differences_sum_to_zero(self, grid16):
        """Test differences of periodic fields have zero mean"""
        f = ScalarField.from_function(grid16, lambda y1, y2: np.cos(2 * np.pi * y1) + y2 * (1 - y2))
        assert abs(integrate(derivative(f, 1))) < 1e-12
        assert abs(integrate(second_derivative(f, 0, 0))) < 1e-10

    def test_axis_out_of_range(self, grid16):
        """Test a bad axis is rejected"""
        with pytest.raises(ValidationError):
            derivative(ScalarField.constant(grid16, 1.0), 2)


class TestReflectionAndRestriction:
    """Test point reflection and restriction"""

    def test_reflection_is_an_involution(self, grid16):
        """Test reflecting twice gives the field back"""
        f = ScalarField.from_function(grid16, lambda y1, y2: np.sin(2 * np.pi * y1) + y2 ** 2)
        twice = shift_reflect(shift_reflect(f, [0.25, 0.125]), [0.25, 0.125])
        np.testing.assert_array_equal(twice.values, f.values)

    def test_reflection_about_origin(self):
        """Test center 0 maps y to -y"""
        grid = PeriodicGrid(1, 8)
        f = ScalarField(grid, np.arange(8.0))
        reflected = shift_reflect(f, 0.0)
        np.testing.assert_array_equal(reflected.values, [0, 7, 6, 5, 4, 3, 2, 1])

    def test_restrict(self):
        """Test restriction samples every other node"""
        fine = ScalarField.from_function(PeriodicGrid(2, 32), lambda y1, y2: y1 + 2 * y2)
        coarse = restrict(fine, PeriodicGrid(2, 16))
        expected = ScalarField.from_function(PeriodicGrid(2, 16), lambda y1, y2: y1 + 2 * y2)
        np.testing.assert_allclose(coarse.values, expected.values)
        with pytest.raises(ValidationError):
            restrict(fine, PeriodicGrid(2, 12))


class TestSymMatrixField:
    """Test symmetric matrix fields"""

    def test_missing_off_diagonal_defaults_to_zero(self, grid16):
        """Test from_arrays fills zeros off the diagonal"""
        field = SymMatrixField.from_arrays(grid16, {(0, 0): 1.0, (1, 1): 2.0})
        assert field.is_diagonal()
        assert field.entry(1, 0).max_abs() == 0.0

    def test_missing_diagonal_is_an_error(self, grid16):
        """Test a diagonal entry is required"""
        with pytest.raises(ValidationError):
            SymMatrixField.from_arrays(grid16, {(0, 0): 1.0})

    def test_eigenvalue_bounds(self, grid16):
        """Test eigenvalues of [[2, 1], [1, 2]]"""
        field = SymMatrixField.from_arrays(grid16, {(0, 0): 2.0, (0, 1): 1.0, (1, 1): 2.0})
        low, high = field.eigenvalue_bounds
        assert low == pytest.approx(1.0)
        assert high == pytest.approx(3.0)

    def test_check_spd(self, grid16):
        """Test an indefinite field is reported with its smallest eigenvalue"""
        field = SymMatrixField.from_arrays(grid16, {(0, 0): 1.0, (0, 1): 2.0, (1, 1): 1.0})
        with pytest.raises(SPDViolationError) as excinfo:
            field.check_spd(1e-8)
        assert excinfo.value.min_eigenvalue == pytest.approx(-1.0)

    def test_distance_and_scaling(self, diagonal_coefficient):
        """Test sup-norm distance of A and 3A"""
        scaled = diagonal_coefficient.scaled(3.0)
        assert scaled.distance(diagonal_coefficient) == pytest.approx(2 * diagonal_coefficient.sup_norm())
