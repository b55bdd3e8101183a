"""
eps-sweeps of the oscillatory Dirichlet problem and the s-sweep of diag(a1, s a2)

A rate study homogenizes the coefficient on the same torus grid the box solver
samples it on (cells_per_period nodes per period), so the effective matrix and
obstruction tensor are those of the discrete two-scale expansion being
measured.
"""
from __future__ import annotations

from dataclasses import dataclass
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from homlab import resolve_setting
from homlab.dirichlet.polynomial import Polynomial
from homlab.dirichlet.solver import (
    BoxGrid,
    corrector_source,
    oscillatory_grid,
    solve_effective,
    solve_oscillatory,
    solve_z,
)
from homlab.gallery.constructions import FieldSource, a_s_family, limit_measure
from homlab.gallery.specs import CoefficientSpec, realize
from homlab.homogenize.pipeline import HomogenizationResult, homogenize
from homlab.models import NodeSet
from homlab.periodic.solver import invariant_measure
from homlab.rates.fitting import SlopeFit, fit_slope, local_slopes
from homlab.torus.fields import PeriodicGrid, SymMatrixField, as_matrix, l2_norm
from homlab.utils.enhanced_logging import get_logger
from homlab.utils.error_handling import ErrorCategory, ValidationError, error_context
from homlab.utils.validation import ReciprocalLadderRule, validate_fields

logger = get_logger(__name__)

Indices = Tuple[int, int, int]


@dataclass(frozen=True)
class CubicData:
    """u = (x - x0)_j (x - x0)_k (x - x0)_l with f = -abar : D^2 u and g = u."""

    u: Polynomial
    f: Polynomial
    g: Polynomial
    indices: Indices
    center: Tuple[float, ...]

    def to_dict(self):
        return {
            'indices': [index + 1 for index in self.indices],
            'center': list(self.center),
            'u': self.u.to_source(),
            'f': self.f.to_source(),
        }


def cubic_data(abar, j: int, k: int, l: int,
               center: Union[None, float, Sequence[float]] = None) -> CubicData:
    abar = as_matrix(abar)
    dim = abar.shape[0]
    for name, index in (('j', j), ('k', k), ('l', l)):
        if not 0 <= index < dim:
            raise ValidationError(f"index {name}={index} out of range for dim {dim}", field=name)
    if center is None:
        center = (0.0,) * dim
    elif np.ndim(center) == 0:
        center = (float(center),) * dim
    center = tuple(float(c) for c in center)
    if len(center) != dim:
        raise ValidationError(f"center needs {dim} components", field='center')

    u = Polynomial.constant(dim, 1.0)
    for axis in sorted((j, k, l)):
        u = u * Polynomial.coordinate(dim, axis, center[axis])

    f = Polynomial.constant(dim, 0.0)
    for a in range(dim):
        for b in range(dim):
            if abar[a, b] != 0.0:
                f = f - u.derivative(a).derivative(b) * abar[a, b]
    return CubicData(u=u, f=f, g=u, indices=(j, k, l), center=center)


@dataclass(frozen=True)
class RatePoint:
    reciprocal: int
    intervals: int
    e0: float
    e1: float
    residual: float

    @property
    def eps(self) -> float:
        return 1.0 / self.reciprocal


@dataclass(frozen=True)
class RateStudy:
    spec: Optional[CoefficientSpec]
    data: CubicData
    cells_per_period: int
    nodes: NodeSet
    homogenization: HomogenizationResult
    points: List[RatePoint]
    fit_e0: SlopeFit
    fit_e1: SlopeFit
    h_max: float
    z_max: float
    expected: str
    passed: bool

    @property
    def eps(self) -> List[float]:
        return [point.eps for point in self.points]

    def csv_header(self) -> List[str]:
        return ['eps', 'e0', 'e1', 'local_slope_e0', 'local_slope_e1']

    def csv_rows(self) -> List[List[Any]]:
        e0 = [point.e0 for point in self.points]
        e1 = [point.e1 for point in self.points]
        slopes0 = local_slopes(self.eps, e0)
        slopes1 = local_slopes(self.eps, e1)
        return [
            [point.eps, point.e0, point.e1,
             '' if s0 is None else s0, '' if s1 is None else s1]
            for point, s0, s1 in zip(self.points, slopes0, slopes1)
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'spec': self.spec,
            'data': self.data,
            'cells_per_period': self.cells_per_period,
            'nodes': self.nodes,
            'homogenization': self.homogenization,
            'points': [
                {'eps': point.eps, 'reciprocal': point.reciprocal, 'intervals': point.intervals,
                 'e0': point.e0, 'e1': point.e1, 'residual': point.residual}
                for point in self.points
            ],
            'fit_e0': self.fit_e0,
            'fit_e1': self.fit_e1,
            'h_max': self.h_max,
            'z_max': self.z_max,
            'expected': self.expected,
            'passed': self.passed,
        }


def _rate_point(task) -> RatePoint:
    """One eps of a study; top-level so a process pool can pickle it."""
    (coefficient, reciprocal, cells_per_period, abar, data, z_values, z_intervals,
     common_intervals, tol, max_unknowns) = task
    eps = 1.0 / reciprocal
    with error_context('rate_point', ErrorCategory.NUMERICAL, eps=eps, reciprocal=reciprocal):
        oscillating = solve_oscillatory(coefficient, eps, data.f, data.g,
                                        cells_per_period=cells_per_period, tol=tol,
                                        max_unknowns=max_unknowns)
        grid = oscillating.grid
        effective = solve_effective(abar, data.f, data.g, grid.intervals, tol=tol)

    stride = z_intervals // grid.intervals
    z = z_values[(slice(None, None, stride),) * grid.dim]
    deviation = oscillating.values - effective.values
    corrected = deviation - 2.0 * eps * z

    if common_intervals is not None:
        common = BoxGrid(grid.dim, common_intervals)
        stride = grid.intervals // common.intervals
        select = (slice(None, None, stride),) * grid.dim
        deviation, corrected = deviation[select], corrected[select]

    return RatePoint(
        reciprocal=reciprocal,
        intervals=grid.intervals,
        e0=float(np.max(np.abs(deviation))),
        e1=float(np.max(np.abs(corrected))),
        residual=max(oscillating.residual, effective.residual),
    )


def _expectation(result: HomogenizationResult, h_max: float) -> str:
    if not result.verdict.is_bad or h_max <= result.verdict.threshold:
        return 'second_order'
    return 'first_order'


def _passes(expected: str, fit_e0: SlopeFit, fit_e1: SlopeFit) -> bool:
    if expected == 'second_order':
        return fit_e0.at_roundoff or fit_e0.slope >= resolve_setting('HOMLAB_GOOD_SLOPE_MIN')
    low, high = resolve_setting('HOMLAB_BAD_SLOPE_RANGE')
    first_order = fit_e0.slope is not None and low <= fit_e0.slope <= high
    corrected = fit_e1.at_roundoff or fit_e1.slope >= resolve_setting('HOMLAB_CORRECTED_SLOPE_MIN')
    return first_order and corrected


def run_rate_study(spec: Union[CoefficientSpec, SymMatrixField], indices: Indices = (0, 0, 0),
                   eps_reciprocals: Optional[Sequence[int]] = None,
                   cells_per_period: Optional[int] = None, tol: Optional[float] = None,
                   nodes: Union[NodeSet, str] = NodeSet.OWN,
                   center: Union[None, float, Sequence[float]] = None,
                   workers: Optional[int] = None,
                   threshold: Optional[float] = None) -> RateStudy:
    """e0 = |u^eps - u| and e1 = |u^eps - u - 2 eps z| over a ladder of eps = 1/P."""
    eps_reciprocals = list(resolve_setting('HOMLAB_EPS_LADDER', eps_reciprocals))
    cells_per_period = resolve_setting('HOMLAB_CELLS_PER_PERIOD', cells_per_period)
    tol = resolve_setting('HOMLAB_SOLVER_TOL', tol)
    workers = resolve_setting('HOMLAB_RATE_WORKERS', workers)
    threshold = resolve_setting('HOMLAB_CLASSIFY_THRESHOLD', threshold)
    max_unknowns = resolve_setting('HOMLAB_MAX_BOX_UNKNOWNS')
    nodes = NodeSet(nodes)
    validate_fields({'eps': eps_reciprocals}, [ReciprocalLadderRule('eps', min_length=3)])

    if isinstance(spec, SymMatrixField):
        coefficient, spec = spec, None
        if coefficient.grid.resolution != cells_per_period:
            raise ValidationError(
                f"coefficient sampled on N={coefficient.grid.resolution}, "
                f"but the study uses {cells_per_period} cells per period", field='cells_per_period'
            )
    else:
        coefficient = realize(spec, PeriodicGrid(spec.dim, cells_per_period))

    with logger.operation_context('rate_study', variant=spec.variant.value if spec else 'field',
                                  eps=eps_reciprocals, cells_per_period=cells_per_period):
        result = homogenize(coefficient, tol=tol, threshold=threshold)
        data = cubic_data(result.abar, *indices, center=center)

        finest = oscillatory_grid(coefficient.dim, 1.0 / eps_reciprocals[-1], cells_per_period)
        coarsest = oscillatory_grid(coefficient.dim, 1.0 / eps_reciprocals[0], cells_per_period)
        if finest.interior_size > max_unknowns:
            raise ValidationError(
                f"eps = 1/{eps_reciprocals[-1]} needs {finest.interior_size} box unknowns "
                f"(cap {max_unknowns}); drop the last eps or lower cells_per_period",
                field='eps',
            )
        z = solve_z(result.abar, result.tensor.c, data.u, intervals=finest.intervals, tol=tol)
        h_max = float(np.max(np.abs(corrector_source(result.tensor.c, data.u, coarsest))))

        common = coarsest.intervals if nodes is NodeSet.COMMON else None
        tasks = [
            (coefficient, reciprocal, cells_per_period, result.abar, data, z.values,
             finest.intervals, common, tol, max_unknowns)
            for reciprocal in eps_reciprocals
        ]
        if workers > 1:
            with Pool(min(workers, len(tasks))) as pool:
                outcomes = pool.map(_rate_point, tasks)
        else:
            outcomes = [_rate_point(task) for task in tasks]
        points = list(outcomes)
        for point in points:
            logger.info("Rate point", eps=point.eps, intervals=point.intervals,
                        e0=point.e0, e1=point.e1)

        steps = [point.eps for point in points]
        fit_e0 = fit_slope(steps, [point.e0 for point in points], label='e0')
        fit_e1 = fit_slope(steps, [point.e1 for point in points], label='e1')
        expected = _expectation(result, h_max)
        passed = _passes(expected, fit_e0, fit_e1)

    logger.info("Rate study finished", expected=expected, passed=passed,
                slope_e0=fit_e0.slope, slope_e1=fit_e1.slope)
    return RateStudy(
        spec=spec,
        data=data,
        cells_per_period=cells_per_period,
        nodes=nodes,
        homogenization=result,
        points=points,
        fit_e0=fit_e0,
        fit_e1=fit_e1,
        h_max=h_max,
        z_max=z.max_abs(),
        expected=expected,
        passed=passed,
    )


@dataclass(frozen=True)
class AsymptoticStudy:
    s_values: List[float]
    distances: List[float]
    resolution: int

    @property
    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.distances, self.distances[1:]))

    @property
    def at_roundoff(self) -> bool:
        return max(self.distances) <= 1e-12

    @property
    def ratio(self) -> Optional[float]:
        if self.distances[0] == 0.0:
            return None
        return self.distances[-1] / self.distances[0]

    def csv_header(self) -> List[str]:
        return ['s', 'l2_distance']

    def csv_rows(self) -> List[List[float]]:
        return [[s, d] for s, d in zip(self.s_values, self.distances)]

    def to_dict(self):
        return {
            's': self.s_values,
            'distances': self.distances,
            'N': self.resolution,
            'strictly_decreasing': self.strictly_decreasing,
            'at_roundoff': self.at_roundoff,
            'ratio': self.ratio,
        }


def run_asymptotic_study(a1: FieldSource = '1', a2: FieldSource = '1+0.5*sin(2*pi*(y1+y2))',
                         s_values: Sequence[float] = (10.0, 100.0, 1000.0),
                         resolution: Optional[int] = None,
                         tol: Optional[float] = None) -> AsymptoticStudy:
    """L2 distance between the invariant measure of diag(a1, s a2) and its s -> infinity limit."""
    resolution = resolve_setting('HOMLAB_GRID_N', resolution)
    s_values = [float(s) for s in s_values]
    validate_fields({'s': s_values}, [ReciprocalLadderRule('s', min_length=3, integer=False)])
    if s_values[0] < 1.0:
        raise ValidationError("s values must be >= 1", field='s')

    grid = PeriodicGrid(2, resolution)
    limit = limit_measure(a1, a2, grid)
    distances = []
    with logger.operation_context('asymptotic_study', N=resolution, s=s_values):
        for s in s_values:
            measure = invariant_measure(a_s_family(a1, a2, s, grid), tol=tol)
            distances.append(l2_norm(measure.r - limit))
            logger.info("Asymptotic point", s=s, distance=distances[-1],
                        residual=measure.residual)
    return AsymptoticStudy(s_values=s_values, distances=distances, resolution=resolution)
