"""Tests for cell problems, the obstruction tensor and classification"""
import numpy as np
import pytest

from homlab.gallery.constructions import prop31_bad
from homlab.gallery.specs import CoefficientSpec, realize
from homlab.homogenize import (
    classification_scale,
    classify,
    corrector_for_matrix,
    divergence_field,
    effective_matrix,
    homogenize,
    obstruction_tensor,
    solve_cell_problems,
    solve_p_auxiliary,
)
from homlab.models import Classification
from homlab.periodic.solver import DiscreteOperator, invariant_measure
from homlab.torus.fields import PeriodicGrid, ScalarField, SymMatrixField, integrate
from homlab.utils.error_handling import ValidationError


@pytest.fixture
def full_pipeline(full_coefficient):
    measure = invariant_measure(full_coefficient)
    cells = solve_cell_problems(full_coefficient, measure)
    tensor = obstruction_tensor(full_coefficient, measure, cells)
    return full_coefficient, measure, cells, tensor


class TestEffectiveMatrix:
    """Test abar = int A r"""

    def test_one_dimensional_harmonic_mean(self):
        """Test abar = 1 / mean(1/a) in one dimension"""
        grid = PeriodicGrid(1, 32)
        a = ScalarField.from_function(grid, lambda y: 1 + 0.5 * np.sin(2 * np.pi * y))
        coefficient = SymMatrixField.from_arrays(grid, {(0, 0): a.values})
        abar = effective_matrix(coefficient, invariant_measure(coefficient))
        assert abar[0, 0] == pytest.approx(1.0 / np.mean(1.0 / a.values), rel=1e-12)

    def test_symmetric_and_positive(self, full_pipeline):
        """Test abar is symmetric positive definite"""
        _, _, cells, _ = full_pipeline
        np.testing.assert_array_equal(cells.abar, cells.abar.T)
        assert np.linalg.eigvalsh(cells.abar)[0] > 0

    @pytest.mark.parametrize('name', ['separable', 'prop31', 'thm16'])
    def test_within_pointwise_bounds(self, grid32, name):
        """Test the eigenvalues of abar lie between the pointwise extremes"""
        coefficient = realize(CoefficientSpec.named(name), grid32)
        low, high = coefficient.eigenvalue_bounds
        eigenvalues = np.linalg.eigvalsh(effective_matrix(coefficient, invariant_measure(coefficient)))
        assert low - 1e-12 <= eigenvalues[0]
        assert eigenvalues[-1] <= high + 1e-12


class TestCellProblems:
    """Test the corrector equations"""

    def test_correctors_solve_their_equations(self, full_pipeline):
        """Test L v^{kl} = a_kl - abar_kl with zero mean"""
        coefficient, _, cells, _ = full_pipeline
        operator = DiscreteOperator(coefficient)
        for (k, l), entry in coefficient.items():
            v = cells.corrector(k, l)
            residual = operator.apply(v) - (entry - cells.abar[k, l])
            assert residual.max_abs() < 1e-8
            assert abs(v.values.mean()) < 1e-13

    def test_symmetric_storage(self, full_pipeline):
        """Test v^{kl} and v^{lk} are the same field"""
        _, _, cells, _ = full_pipeline
        assert cells.corrector(0, 1) is cells.corrector(1, 0)

    def test_corrector_for_matrix(self, full_pipeline):
        """Test v(y, M) is linear in M"""
        _, _, cells, _ = full_pipeline
        M = np.array([[2.0, 0.5], [0.5, -1.0]])
        expected = cells.corrector(0, 0) * 2.0 + cells.corrector(0, 1) * 1.0 - cells.corrector(1, 1)
        np.testing.assert_allclose(corrector_for_matrix(cells, M).values, expected.values, atol=1e-14)

    def test_corrector_for_matrix_rejects_asymmetric(self, full_pipeline):
        _, _, cells, _ = full_pipeline
        with pytest.raises(ValidationError):
            corrector_for_matrix(cells, [[1.0, 1.0], [0.0, 1.0]])

    def test_unpatched_identity(self):
        """Test the logged entry point on the identity gives vanishing correctors"""
        identity = SymMatrixField.identity(PeriodicGrid(2, 8))
        cells = solve_cell_problems(identity, invariant_measure(identity))
        np.testing.assert_allclose(cells.abar, np.eye(2), atol=1e-12)
        assert max(v.max_abs() for v in cells.v.values()) < 1e-12


class TestObstructionTensor:
    """Test c^{kl}_j"""

    def test_two_forms_agree(self, full_pipeline):
        """Test the gradient and divergence forms match at round-off"""
        _, _, _, tensor = full_pipeline
        assert tensor.dual_gap < 1e-10

    def test_symmetric_in_kl(self, full_pipeline):
        _, _, _, tensor = full_pipeline
        np.testing.assert_array_equal(tensor.c, np.transpose(tensor.c, (1, 0, 2)))

    def test_gauge_invariance(self, full_pipeline):
        """Test adding constants to correctors leaves c unchanged"""
        coefficient, measure, cells, tensor = full_pipeline
        shifted = cells.shifted({(0, 0): 3.0, (0, 1): -1.5, (1, 1): 0.25})
        np.testing.assert_allclose(obstruction_tensor(coefficient, measure, shifted).c,
                                   tensor.c, atol=1e-12)

    def test_scales_linearly(self, full_pipeline):
        """Test c(3A) = 3 c(A)"""
        coefficient, _, _, tensor = full_pipeline
        scaled = homogenize(coefficient.scaled(3.0))
        np.testing.assert_allclose(scaled.tensor.c, 3.0 * tensor.c, atol=1e-9)

    def test_prop31_prediction(self):
        """Test abar_11 = 1 and c^{11}_1 = -s int (D1 r0)^2"""
        grid = PeriodicGrid(2, 32)
        construction = prop31_bad(grid=grid)
        result = homogenize(construction.coefficient)
        assert result.abar[0, 0] == pytest.approx(1.0, abs=1e-9)
        assert result.tensor.c[0, 0, 0] == pytest.approx(construction.predicted_c111, rel=1e-6)
        assert construction.predicted_c111 < 0
        assert result.verdict.classification is Classification.C_BAD

    def test_prop31_corrector(self):
        """Test the (1,1) corrector is s D1 r0"""
        construction = prop31_bad(grid=PeriodicGrid(2, 32))
        result = homogenize(construction.coefficient)
        np.testing.assert_allclose(result.cells.corrector(0, 0).values, construction.v.values, atol=1e-9)

    def test_continuous_in_coefficient(self, full_pipeline, grid16):
        """Test |c(A + tB) - c(A)| shrinks with t"""
        coefficient, _, _, tensor = full_pipeline
        y1, y2 = grid16.coordinates()
        direction = SymMatrixField.from_arrays(grid16, {
            (0, 0): np.sin(2 * np.pi * y2),
            (0, 1): 0.1 * np.sin(2 * np.pi * y1),
            (1, 1): np.cos(2 * np.pi * (y1 + y2)),
        })
        gaps = []
        for t in (0.1, 0.01, 0.001):
            perturbed = SymMatrixField(grid16, {
                key: entry + direction.entries[key] * t for key, entry in coefficient.entries.items()
            })
            gaps.append(np.max(np.abs(homogenize(perturbed).tensor.c - tensor.c)))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 0.05 * gaps[0]

    @pytest.mark.parametrize('N', [16, 32, 64, 128])
    def test_forms_agree_on_every_grid(self, N):
        """Test the dual gap stays at round-off under refinement"""
        grid = PeriodicGrid(2, N)
        y1, y2 = grid.coordinates()
        coefficient = SymMatrixField.from_arrays(grid, {
            (0, 0): 1.5 + 0.3 * np.sin(2 * np.pi * y1),
            (0, 1): 0.2 * np.cos(2 * np.pi * (y1 - y2)),
            (1, 1): 1.2 + 0.4 * np.cos(2 * np.pi * y2),
        })
        assert homogenize(coefficient).tensor.dual_gap < 1e-10


class TestClassify:
    """Test the good/bad verdict"""

    @pytest.mark.parametrize('name', ['identity', 'scalar', 'separable', 'missing_own', 'layered', 'shifted_even'])
    def test_good_families(self, grid32, name):
        """Test every c-good family is classified as such"""
        result = homogenize(realize(CoefficientSpec.named(name), grid32))
        assert result.verdict.classification is Classification.C_GOOD
        assert result.tensor.max_abs < 1e-8

    @pytest.mark.parametrize('name', ['identity', 'scalar', 'separable', 'missing_own', 'layered'])
    def test_good_families_have_no_drift(self, grid32, name):
        """Test (a_ij r)_{y_i} vanishes for the divergence-form families"""
        coefficient = realize(CoefficientSpec.named(name), grid32)
        components = divergence_field(coefficient, invariant_measure(coefficient))
        assert max(component.max_abs() for component in components) < 1e-8

    def test_threshold(self, full_pipeline):
        """Test the verdict follows the threshold"""
        _, _, _, tensor = full_pipeline
        loose = classify(tensor, threshold=10.0 * tensor.max_abs + 1.0)
        assert loose.classification is Classification.C_GOOD
        assert loose.margin < 0
        with pytest.raises(ValidationError):
            classify(tensor, threshold=0.0)

    def test_result_document(self, grid16):
        """Test the serializable result carries the verdict"""
        document = homogenize(SymMatrixField.identity(grid16)).to_dict()
        assert document['verdict'] == 'c-good'
        assert document['grid'] == {'dim': 2, 'N': 16}
        np.testing.assert_allclose(document['abar'], np.eye(2), atol=1e-12)

    @pytest.mark.parametrize('factor', [1.0, 1e-4, 1e3])
    def test_verdict_ignores_scaling(self, factor):
        """Test A and factor * A get the same verdict"""
        coefficient = prop31_bad(grid=PeriodicGrid(2, 32)).coefficient
        result = homogenize(coefficient.scaled(factor))
        assert result.verdict.classification is Classification.C_BAD
        assert result.verdict.scale == pytest.approx(
            factor * homogenize(coefficient).verdict.scale, rel=1e-6)

    def test_scale_floor_for_constants(self, grid16):
        """Test constant coefficients keep a positive threshold"""
        identity = SymMatrixField.identity(grid16)
        measure = invariant_measure(identity)
        cells = solve_cell_problems(identity, measure)
        assert classification_scale(identity, cells) == pytest.approx(1.0)
        with pytest.raises(ValidationError):
            classify(obstruction_tensor(identity, measure, cells), scale=0.0)


class TestAuxiliaryProblem:
    """Test p^{dkl}"""

    def test_solves_its_equation(self, full_pipeline):
        """Test L p = a_id D_i v^{kl} - c^{kl}_d"""
        from homlab.torus.fields import derivative

        coefficient, measure, cells, tensor = full_pipeline
        p = solve_p_auxiliary(coefficient, measure, cells, tensor, d=1, k=0, l=1)
        rhs = sum(coefficient.entry(i, 1) * derivative(cells.corrector(0, 1), i) for i in range(2))
        rhs = rhs - tensor.c[0, 1, 1]
        residual = DiscreteOperator(coefficient).apply(p) - rhs
        assert residual.max_abs() < 1e-8
        assert abs(integrate(p)) < 1e-13

    def test_index_range(self, full_pipeline):
        coefficient, measure, cells, tensor = full_pipeline
        with pytest.raises(ValidationError):
            solve_p_auxiliary(coefficient, measure, cells, tensor, d=2, k=0, l=0)
