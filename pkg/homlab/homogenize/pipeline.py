"""Homogenization pipeline: correctors, effective matrix, obstruction tensor, verdict."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np

from homlab import resolve_setting
from homlab.models import Classification
from homlab.periodic.solver import (
    DiscreteOperator,
    InvariantMeasure,
    OperatorLike,
    as_operator,
    invariant_measure,
    solve_singular_with_report,
)
from homlab.torus.fields import (
    PeriodicGrid,
    ScalarField,
    SymMatrixField,
    as_matrix,
    derivative,
    integrate,
)
from homlab.utils.enhanced_logging import get_logger, log_operation
from homlab.utils.error_handling import CompatibilityError, SPDViolationError, ValidationError

logger = get_logger(__name__)

Index = Tuple[int, int]


def _coefficient(A: OperatorLike) -> SymMatrixField:
    return A.coefficient if isinstance(A, DiscreteOperator) else A


@dataclass(frozen=True)
class CellSolutionSet:
    grid: PeriodicGrid
    v: Dict[Index, ScalarField]
    abar: np.ndarray
    residual: float
    residuals: Dict[Index, float] = field(default_factory=dict)

    def corrector(self, k: int, l: int) -> ScalarField:
        return self.v[(k, l)]

    def shifted(self, constants: Dict[Index, float]) -> 'CellSolutionSet':
        """Same correctors with constants added (gauge change)."""
        v = dict(self.v)
        for (k, l), constant in constants.items():
            shifted = self.v[(k, l)] + constant
            v[(k, l)] = shifted
            v[(l, k)] = shifted
        return CellSolutionSet(self.grid, v, self.abar, self.residual, dict(self.residuals))


@dataclass(frozen=True)
class ObstructionTensor:
    c: np.ndarray
    dual_gap: float
    divergence_form: np.ndarray

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.c)))

    def to_dict(self):
        return {
            'c': self.c,
            'dual_gap': self.dual_gap,
            'max_abs_c': self.max_abs,
        }


@dataclass(frozen=True)
class Verdict:
    """``threshold`` is the absolute cut: relative threshold times ``scale``."""

    classification: Classification
    max_abs_c: float
    threshold: float
    scale: float = 1.0

    @property
    def margin(self) -> float:
        return self.max_abs_c - self.threshold

    @property
    def is_bad(self) -> bool:
        return self.classification is Classification.C_BAD

    def to_dict(self):
        return {
            'verdict': self.classification.value,
            'max_abs_c': self.max_abs_c,
            'threshold': self.threshold,
            'threshold_scale': self.scale,
            'margin': self.margin,
        }


def effective_matrix(A: OperatorLike, r: Union[InvariantMeasure, ScalarField]) -> np.ndarray:
    """abar = int A r dy."""
    coefficient = _coefficient(A)
    weight = r.r if isinstance(r, InvariantMeasure) else r
    n = coefficient.dim
    abar = np.empty((n, n))
    for (k, l), entry in coefficient.items():
        abar[k, l] = abar[l, k] = integrate(entry * weight)
    return abar


@log_operation('solve_cell_problems')
def solve_cell_problems(A: OperatorLike, r: InvariantMeasure,
                        tol: Optional[float] = None) -> CellSolutionSet:
    """v^{kl} for k <= l; the (l, k) entry shares the same field.

    abar_kl = int a_kl r is computed first and used as the right-side
    constant, which makes every cell problem exactly compatible.
    """
    operator = as_operator(A)
    coefficient = operator.coefficient
    abar = effective_matrix(coefficient, r)

    eigenvalues = np.linalg.eigvalsh(abar)
    if eigenvalues[0] <= 0.0:
        raise SPDViolationError("effective matrix is not positive definite",
                                min_eigenvalue=float(eigenvalues[0]))

    v: Dict[Index, ScalarField] = {}
    residuals: Dict[Index, float] = {}
    for (k, l), entry in coefficient.items():
        corrector, report = solve_singular_with_report(operator, entry - abar[k, l], r, tol=tol)
        v[(k, l)] = v[(l, k)] = corrector
        residuals[(k, l)] = report.residual

    residual = max(residuals.values())
    logger.info("Cell problems solved", abar=abar.tolist(), residual=residual)
    return CellSolutionSet(operator.grid, v, abar, residual, residuals)


def _obstruction_forms(coefficient: SymMatrixField, r: ScalarField, v: ScalarField,
                       j: int) -> Tuple[float, float]:
    n = coefficient.dim
    gradient_form = sum(
        integrate(coefficient.entry(i, j) * derivative(v, i) * r) for i in range(n)
    )
    divergence_form = -sum(
        integrate(derivative(coefficient.entry(i, j) * r, i) * v) for i in range(n)
    )
    return gradient_form, divergence_form


def obstruction_tensor(A: OperatorLike, r: InvariantMeasure,
                       cells: CellSolutionSet) -> ObstructionTensor:
    """c^{kl}_j = int a_ij D_i v^{kl} r, cross-checked against -int D_i(a_ij r) v^{kl}."""
    coefficient = _coefficient(A)
    n = coefficient.dim
    c = np.zeros((n, n, n))
    divergence = np.zeros((n, n, n))

    for k in range(n):
        for l in range(k, n):
            for j in range(n):
                first, second = _obstruction_forms(coefficient, r.r, cells.v[(k, l)], j)
                c[k, l, j] = c[l, k, j] = first
                divergence[k, l, j] = divergence[l, k, j] = second

    dual_gap = float(np.max(np.abs(c - divergence)))
    logger.info("Obstruction tensor computed", max_abs_c=float(np.max(np.abs(c))),
                dual_gap=dual_gap)
    return ObstructionTensor(c=c, dual_gap=dual_gap, divergence_form=divergence)


def classification_scale(A: OperatorLike, cells: CellSolutionSet) -> float:
    """max|A| * max(1, max|v^{kl}|).

    c is linear in A while r and v are not changed by scaling A, so a
    threshold multiplied by this factor gives the same verdict for A and sA.
    The floor on the corrector factor keeps constant coefficients (v = 0)
    from getting a zero threshold.
    """
    corrector_size = max(corrector.max_abs() for corrector in cells.v.values())
    return _coefficient(A).sup_norm() * max(1.0, corrector_size)


def classify(c: ObstructionTensor, threshold: Optional[float] = None,
             scale: float = 1.0) -> Verdict:
    threshold = resolve_setting('HOMLAB_CLASSIFY_THRESHOLD', threshold)
    if not threshold > 0:
        raise ValidationError(f"threshold must be positive, got {threshold}", field='threshold')
    if not scale > 0:
        raise ValidationError(f"threshold scale must be positive, got {scale}", field='scale')
    cut = threshold * scale
    classification = Classification.C_BAD if c.max_abs > cut else Classification.C_GOOD
    return Verdict(classification=classification, max_abs_c=c.max_abs, threshold=cut, scale=scale)


def solve_p_auxiliary(A: OperatorLike, r: InvariantMeasure, cells: CellSolutionSet,
                      c: ObstructionTensor, d: int, k: int, l: int,
                      tol: Optional[float] = None,
                      compatibility_tol: Optional[float] = None) -> ScalarField:
    """Mean-zero p^{dkl} with L p = a_id D_i v^{kl} - c^{kl}_d.

    The right side integrates to zero against r by the definition of c, so
    a failed compatibility check points at an inconsistent pipeline.
    """
    operator = as_operator(A)
    coefficient = operator.coefficient
    n = coefficient.dim
    for name, index in (('d', d), ('k', k), ('l', l)):
        if not 0 <= index < n:
            raise ValidationError(f"index {name}={index} out of range for dim {n}", field=name)

    compatibility_tol = resolve_setting('HOMLAB_COMPATIBILITY_TOL', compatibility_tol)
    v = cells.v[(k, l)]
    rhs = sum(coefficient.entry(i, d) * derivative(v, i) for i in range(n)) - c.c[k, l, d]

    residual = abs(integrate(rhs * r.r))
    if residual > compatibility_tol * max(1.0, rhs.max_abs()):
        raise CompatibilityError(
            f"auxiliary right side for (d,k,l)=({d},{k},{l}) is not r-orthogonal "
            f"({residual:.3e}); c and the correctors disagree",
            residual=residual,
        )

    p, report = solve_singular_with_report(operator, rhs, r, tol=tol,
                                           compatibility_tol=compatibility_tol)
    logger.debug("Auxiliary problem solved", d=d, k=k, l=l,
                 compatibility=residual, residual=report.residual)
    return p


def corrector_for_matrix(cells: CellSolutionSet, M) -> ScalarField:
    """v(y, M) = M_kl v^{kl}(y)."""
    n = cells.grid.dim
    M = as_matrix(M, n)
    if np.max(np.abs(M - M.T)) > 1e-12 * max(1.0, np.max(np.abs(M))):
        raise ValidationError("corrector matrix must be symmetric", field='M')
    total = ScalarField.constant(cells.grid, 0.0)
    for k in range(n):
        for l in range(n):
            if M[k, l] != 0.0:
                total = total + cells.v[(k, l)] * M[k, l]
    return total


def divergence_field(A: OperatorLike, r: Union[InvariantMeasure, ScalarField]) -> Tuple[ScalarField, ...]:
    """b_j = sum_i D_i(a_ij r); every component vanishes for the c-good families."""
    coefficient = _coefficient(A)
    measure = r.r if isinstance(r, InvariantMeasure) else r
    n = coefficient.dim
    return tuple(
        sum(derivative(coefficient.entry(i, j) * measure, i) for i in range(n))
        for j in range(n)
    )


@dataclass(frozen=True)
class HomogenizationResult:
    grid: PeriodicGrid
    measure: InvariantMeasure
    cells: CellSolutionSet
    tensor: ObstructionTensor
    verdict: Verdict
    drift_norm: float

    @property
    def abar(self) -> np.ndarray:
        return self.cells.abar

    def to_dict(self):
        return {
            'grid': {'dim': self.grid.dim, 'N': self.grid.resolution},
            'abar': self.cells.abar,
            'c': self.tensor.c,
            'dual_gap': self.tensor.dual_gap,
            'measure_residual': self.measure.residual,
            'cell_residual': self.cells.residual,
            'drift_norm': self.drift_norm,
            **self.verdict.to_dict(),
        }


def homogenize(A: OperatorLike, tol: Optional[float] = None,
               threshold: Optional[float] = None) -> HomogenizationResult:
    """Run the whole pipeline on one coefficient field."""
    operator = as_operator(A)
    with logger.operation_context('homogenize', N=operator.grid.resolution, dim=operator.grid.dim):
        measure = invariant_measure(operator, tol=tol)
        cells = solve_cell_problems(operator, measure, tol=tol)
        tensor = obstruction_tensor(operator, measure, cells)
        verdict = classify(tensor, threshold, scale=classification_scale(operator, cells))
        drift_norm = max(component.max_abs() for component in divergence_field(operator, measure))

    logger.info("Homogenization verdict", verdict=verdict.classification.value,
                max_abs_c=verdict.max_abs_c, drift_norm=drift_norm)
    return HomogenizationResult(
        grid=operator.grid,
        measure=measure,
        cells=cells,
        tensor=tensor,
        verdict=verdict,
        drift_norm=drift_norm,
    )
