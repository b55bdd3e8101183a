"""Singular periodic problems for L = -a_ij d_ij on the torus grid.

``invariant_measure`` finds the positive unit-mass null vector of the
discrete adjoint; ``solve_singular`` solves L v = g for r-orthogonal g with
the mean-zero gauge.  Both bordered systems are factorized once per
operator and reused for every right side.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from homlab import resolve_setting
from homlab.periodic.linalg import FactorizedSystem, SolveReport, roundoff_floor
from homlab.torus.fields import PeriodicGrid, ScalarField, SymMatrixField, integrate
from homlab.utils.enhanced_logging import get_logger
from homlab.utils.error_handling import CompatibilityError, PositivityError

logger = get_logger(__name__)


def periodic_shift(resolution: int) -> sp.csr_matrix:
    """(P v)[i] = v[i + 1 mod N]."""
    return sp.csr_matrix(sp.eye(resolution, k=1) + sp.eye(resolution, k=-(resolution - 1)))


def first_difference(resolution: int, spacing: float) -> sp.csr_matrix:
    shift = periodic_shift(resolution)
    return sp.csr_matrix((shift - shift.T) / (2.0 * spacing))


def second_difference(resolution: int, spacing: float) -> sp.csr_matrix:
    shift = periodic_shift(resolution)
    return sp.csr_matrix((shift - 2.0 * sp.eye(resolution) + shift.T) / (spacing * spacing))


def along_axis(operator: sp.spmatrix, axis: int, dim: int) -> sp.csr_matrix:
    """Lift a 1D operator to act on ``axis`` of a C-ordered dim-D array."""
    size = operator.shape[0]
    before = sp.eye(size ** axis)
    after = sp.eye(size ** (dim - axis - 1))
    return sp.csr_matrix(sp.kron(sp.kron(before, operator), after))


def assemble_nondivergence(coefficient_arrays, first, second, size: int) -> sp.csr_matrix:
    """-sum_ii a_ii D2_i - 2 sum_{i<j} a_ij D1_j D1_i; zero off-diagonal fields are skipped."""
    matrix = sp.csr_matrix((size, size))
    for (i, j), values in coefficient_arrays:
        values = np.asarray(values, dtype=float).reshape(-1)
        if i != j and not np.any(values):
            continue
        weight = sp.diags(values)
        if i == j:
            matrix = matrix - weight @ second[i]
        else:
            matrix = matrix - 2.0 * (weight @ (first[j] @ first[i]))
    return sp.csr_matrix(matrix)


class DiscreteOperator:
    """Sparse matrix of v -> -a_ij(y) D_ij v on a periodic grid."""

    def __init__(self, coefficient: SymMatrixField, min_eigenvalue: Optional[float] = None):
        self.coefficient = coefficient
        self.grid: PeriodicGrid = coefficient.grid
        coefficient.check_spd(resolve_setting('HOMLAB_SPD_MIN_EIGENVALUE', min_eigenvalue))
        self.scale = max(1.0, coefficient.sup_norm())
        self.matrix = self._assemble()
        logger.debug("Assembled periodic operator", dim=self.grid.dim,
                     N=self.grid.resolution, nonzeros=int(self.matrix.nnz))

    def _assemble(self) -> sp.csr_matrix:
        grid = self.grid
        first = [along_axis(first_difference(grid.resolution, grid.spacing), axis, grid.dim)
                 for axis in range(grid.dim)]
        second = [along_axis(second_difference(grid.resolution, grid.spacing), axis, grid.dim)
                  for axis in range(grid.dim)]
        arrays = [(key, field.values) for key, field in self.coefficient.items()]
        return assemble_nondivergence(arrays, first, second, grid.size)

    def apply(self, v: ScalarField) -> ScalarField:
        return ScalarField(self.grid, self.matrix @ v.flat())

    def apply_adjoint(self, r: ScalarField) -> ScalarField:
        return ScalarField(self.grid, self.matrix.T @ r.flat())

    def adjoint_residual(self, r: ScalarField) -> Tuple[float, float]:
        """(||L^T r||_inf, round-off floor), both divided by max(1, ||A||)."""
        residual = self.apply_adjoint(r).max_abs() / self.scale
        floor = roundoff_floor(self.matrix.T, r.flat()) / self.scale
        return residual, floor

    def _bordered(self, block: sp.spmatrix) -> sp.csc_matrix:
        size = self.grid.size
        column = sp.csr_matrix(np.ones((size, 1)))
        row = sp.csr_matrix(np.full((1, size), self.grid.cell_volume))
        return sp.csc_matrix(sp.bmat([[block, column], [row, None]]))

    @cached_property
    def adjoint_system(self) -> FactorizedSystem:
        # [[L^T, 1], [h^n 1^T, 0]]: unit mass replaces the missing equation
        return FactorizedSystem(self._bordered(self.matrix.T), label='adjoint system')

    @cached_property
    def primal_system(self) -> FactorizedSystem:
        # [[L, 1], [h^n 1^T, 0]]: mean-zero gauge
        return FactorizedSystem(self._bordered(self.matrix), label='cell system')


OperatorLike = Union[SymMatrixField, DiscreteOperator]


def as_operator(A: OperatorLike) -> DiscreteOperator:
    return A if isinstance(A, DiscreteOperator) else DiscreteOperator(A)


@dataclass(frozen=True)
class InvariantMeasure:
    r: ScalarField
    residual: float
    iterations: int
    floor: float = 0.0

    @property
    def grid(self) -> PeriodicGrid:
        return self.r.grid

    def to_dict(self):
        return {
            'residual': self.residual,
            'iterations': self.iterations,
            'min': self.r.min(),
            'max': self.r.max(),
        }


def _measure_field(r: Union[InvariantMeasure, ScalarField]) -> ScalarField:
    return r.r if isinstance(r, InvariantMeasure) else r


def invariant_measure(A: OperatorLike, tol: Optional[float] = None,
                      max_iterations: Optional[int] = None) -> InvariantMeasure:
    """Positive, unit-mass null vector of the discrete adjoint.

    Inverse iteration at shift zero, made nonsingular by bordering the adjoint
    with the normalization row; the refinement steps are the iterations.
    """
    operator = as_operator(A)
    tol = resolve_setting('HOMLAB_SOLVER_TOL', tol)
    max_iterations = resolve_setting('HOMLAB_SOLVER_MAX_ITERATIONS', max_iterations)
    size = operator.grid.size

    rhs = np.zeros(size + 1)
    rhs[-1] = 1.0
    solution, report = operator.adjoint_system.solve(
        rhs, tol, max_iterations, scale=operator.scale, rows=slice(0, size)
    )

    r = ScalarField(operator.grid, solution[:size])
    r = r / integrate(r)

    smallest = r.min()
    if smallest <= 0.0:
        raise PositivityError(
            f"invariant measure has nonpositive entries (min {smallest:.3e}); refine the grid",
            min_value=smallest, N=operator.grid.resolution,
        )

    residual, floor = operator.adjoint_residual(r)
    logger.info("Invariant measure computed", N=operator.grid.resolution,
                residual=residual, iterations=report.iterations, r_min=smallest)
    return InvariantMeasure(r=r, residual=residual, iterations=report.iterations, floor=floor)


def solve_singular_with_report(A: OperatorLike, g: ScalarField,
                               r: Union[InvariantMeasure, ScalarField],
                               tol: Optional[float] = None,
                               compatibility_tol: Optional[float] = None,
                               max_iterations: Optional[int] = None) -> Tuple[ScalarField, SolveReport]:
    operator = as_operator(A)
    tol = resolve_setting('HOMLAB_SOLVER_TOL', tol)
    compatibility_tol = resolve_setting('HOMLAB_COMPATIBILITY_TOL', compatibility_tol)
    max_iterations = resolve_setting('HOMLAB_SOLVER_MAX_ITERATIONS', max_iterations)
    measure = _measure_field(r)

    projection = integrate(g * measure)
    if abs(projection) > compatibility_tol * g.max_abs():
        raise CompatibilityError(
            f"right side is not r-orthogonal: |int g r| = {abs(projection):.3e} "
            f"> {compatibility_tol:.1e} * ||g||",
            projection=projection, g_norm=g.max_abs(),
        )

    # deflate: remove the co-kernel component along r
    projected = g - measure * (projection / integrate(measure * measure))

    size = operator.grid.size
    rhs = np.append(projected.flat(), 0.0)
    solution, report = operator.primal_system.solve(
        rhs, tol, max_iterations, scale=operator.scale, rows=slice(0, size)
    )
    values = solution[:size]
    v = ScalarField(operator.grid, values - values.mean())
    return v, report


def solve_singular(A: OperatorLike, g: ScalarField, r: Union[InvariantMeasure, ScalarField],
                   tol: Optional[float] = None, compatibility_tol: Optional[float] = None) -> ScalarField:
    """Mean-zero v with L v = g for r-orthogonal g."""
    v, _ = solve_singular_with_report(A, g, r, tol=tol, compatibility_tol=compatibility_tol)
    return v
