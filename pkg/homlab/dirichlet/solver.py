"""
Dirichlet problems on the unit box [0, 1]^n

    -a_ij(x/eps) u_{x_i x_j} = f     oscillatory problem
    -abar_ij u_{x_i x_j}      = f     effective problem
    -abar_ij z_{x_i x_j}      = h     first-order corrector, z = 0 on the boundary

Centered second differences and the 4-point product stencil for mixed
derivatives; both are exact on cubic polynomials.  Boundary nodes carry g
exactly and are eliminated from the linear system.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from homlab import resolve_setting
from homlab.dirichlet.polynomial import Polynomial
from homlab.gallery.expression import Expression, parse_expression
from homlab.gallery.specs import CoefficientSpec, realize
from homlab.periodic.linalg import FactorizedSystem
from homlab.periodic.solver import along_axis, assemble_nondivergence
from homlab.torus.fields import PeriodicGrid, SymMatrixField, as_matrix
from homlab.utils.enhanced_logging import get_logger, log_performance
from homlab.utils.error_handling import DivisibilityError, SPDViolationError, ValidationError

logger = get_logger(__name__)

BoxData = Union[Polynomial, Expression, str, float, int, Callable[..., np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BoxGrid:
    """``intervals`` cells per axis, ``intervals + 1`` nodes including both faces."""

    dim: int
    intervals: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValidationError(f"dim must be 1, 2 or 3, got {self.dim}", field='dim')
        if self.intervals < 2:
            raise ValidationError(f"box needs at least 2 intervals per axis, got {self.intervals}",
                                  field='intervals')

    @property
    def spacing(self) -> float:
        return 1.0 / self.intervals

    @property
    def nodes(self) -> int:
        return self.intervals + 1

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.nodes,) * self.dim

    @property
    def interior_size(self) -> int:
        return (self.intervals - 1) ** self.dim

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        axis = np.linspace(0.0, 1.0, self.nodes)
        return tuple(np.meshgrid(*([axis] * self.dim), indexing='ij'))

    def variables(self) -> Dict[str, np.ndarray]:
        return {f"x{axis + 1}": values for axis, values in enumerate(self.coordinates())}

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.dim] = True
        return mask

    def nests_in(self, finer: 'BoxGrid') -> bool:
        return finer.dim == self.dim and finer.intervals % self.intervals == 0


def box_values(source: BoxData, grid: BoxGrid, label: str = 'data') -> np.ndarray:
    """Node values of box data given as polynomial, expression, callable or number."""
    if isinstance(source, Polynomial):
        values = source.evaluate(*grid.coordinates())
    elif isinstance(source, Expression):
        values = source.evaluate(grid.variables())
    elif isinstance(source, str):
        expression = parse_expression(source, variables=grid.variables().keys())
        values = expression.evaluate(grid.variables())
    elif isinstance(source, np.ndarray):
        values = source
    elif callable(source):
        values = source(*grid.coordinates())
    elif isinstance(source, (int, float)) and not isinstance(source, bool):
        values = float(source)
    else:
        raise ValidationError(f"cannot evaluate {label} of type {type(source).__name__}", field=label)
    values = np.broadcast_to(np.asarray(values, dtype=float), grid.shape)
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{label} is not finite on the box grid", field=label)
    return np.array(values)


def first_difference(grid: BoxGrid) -> sp.csr_matrix:
    """Centered D1 on all nodes of one axis; boundary rows are zero."""
    n, h = grid.nodes, grid.spacing
    operator = sp.lil_matrix(sp.diags([-1.0, 1.0], [-1, 1], shape=(n, n)) / (2.0 * h))
    operator[0, :] = 0.0
    operator[n - 1, :] = 0.0
    return sp.csr_matrix(operator)


def second_difference(grid: BoxGrid) -> sp.csr_matrix:
    n, h = grid.nodes, grid.spacing
    operator = sp.lil_matrix(sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n)) / (h * h))
    operator[0, :] = 0.0
    operator[n - 1, :] = 0.0
    return sp.csr_matrix(operator)


@dataclass(frozen=True)
class DirichletSolution:
    grid: BoxGrid
    values: np.ndarray
    residual: float
    iterations: int

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def restrict(self, grid: BoxGrid) -> np.ndarray:
        """Values on the nodes of a coarser nested box grid."""
        if not grid.nests_in(self.grid):
            raise DivisibilityError(
                f"box grid with {grid.intervals} intervals does not nest in {self.grid.intervals}",
                field='intervals',
            )
        stride = self.grid.intervals // grid.intervals
        return self.values[(slice(None, None, stride),) * self.grid.dim]

    def summary(self) -> Dict[str, Any]:
        return {
            'dim': self.grid.dim,
            'intervals': self.grid.intervals,
            'max_abs': self.max_abs(),
            'residual': self.residual,
            'iterations': self.iterations,
        }

    def csv_rows(self) -> List[List[float]]:
        coordinates = [c.reshape(-1) for c in self.grid.coordinates()]
        values = self.values.reshape(-1)
        return [[*(c[index] for c in coordinates), values[index]] for index in range(values.size)]

    def csv_header(self) -> List[str]:
        return [f"x{axis + 1}" for axis in range(self.grid.dim)] + ['value']


def _assemble(grid: BoxGrid, coefficient_arrays) -> sp.csr_matrix:
    first = [along_axis(first_difference(grid), axis, grid.dim) for axis in range(grid.dim)]
    second = [along_axis(second_difference(grid), axis, grid.dim) for axis in range(grid.dim)]
    size = grid.nodes ** grid.dim
    return assemble_nondivergence(coefficient_arrays, first, second, size)


@log_performance(threshold_ms=5000)
def solve_box(grid: BoxGrid, coefficient_arrays, f: BoxData, g: BoxData,
              tol: Optional[float] = None, scale: float = 1.0,
              max_unknowns: Optional[int] = None) -> DirichletSolution:
    """Eliminate the boundary, solve the interior system, refine to ``tol``."""
    tol = resolve_setting('HOMLAB_SOLVER_TOL', tol)
    max_unknowns = resolve_setting('HOMLAB_MAX_BOX_UNKNOWNS', max_unknowns)
    if grid.interior_size > max_unknowns:
        raise ValidationError(
            f"box grid has {grid.interior_size} unknowns, above the cap of {max_unknowns}; "
            "use fewer cells per period or a coarser eps ladder",
            field='intervals',
        )

    matrix = _assemble(grid, coefficient_arrays)
    interior = np.flatnonzero(grid.interior_mask.reshape(-1))
    boundary = np.flatnonzero(~grid.interior_mask.reshape(-1))

    boundary_values = box_values(g, grid, label='g').reshape(-1)
    source = box_values(f, grid, label='f').reshape(-1)

    values = np.zeros(grid.nodes ** grid.dim)
    values[boundary] = boundary_values[boundary]

    if interior.size:
        block = matrix[interior][:, interior]
        rhs = source[interior] - matrix[interior][:, boundary] @ values[boundary]
        solution, report = FactorizedSystem(block, label='box system').solve(
            rhs, tol, resolve_setting('HOMLAB_SOLVER_MAX_ITERATIONS'), scale=scale
        )
        values[interior] = solution
        residual, iterations = report.residual, report.iterations
    else:
        residual, iterations = 0.0, 0

    logger.debug("Box problem solved", dim=grid.dim, intervals=grid.intervals,
                 unknowns=int(interior.size), residual=residual)
    return DirichletSolution(grid, values.reshape(grid.shape), residual, iterations)


def _constant_arrays(abar: np.ndarray, grid: BoxGrid):
    dim = grid.dim
    abar = as_matrix(abar, dim)
    if np.max(np.abs(abar - abar.T)) > 1e-12 * max(1.0, np.max(np.abs(abar))):
        raise ValidationError("effective matrix must be symmetric", field='abar')
    smallest = float(np.linalg.eigvalsh(abar)[0])
    if smallest <= 0.0:
        raise SPDViolationError("effective matrix is not positive definite", min_eigenvalue=smallest)
    arrays = [((i, j), np.full(grid.shape, abar[i, j])) for i in range(dim) for j in range(i, dim)]
    return arrays, max(1.0, float(np.max(np.abs(abar))))


def solve_effective(abar, f: BoxData, g: BoxData, intervals: int,
                    tol: Optional[float] = None) -> DirichletSolution:
    """-abar_ij u_{x_i x_j} = f in the box, u = g on its boundary."""
    abar = as_matrix(abar)
    grid = BoxGrid(abar.shape[0], intervals)
    arrays, scale = _constant_arrays(abar, grid)
    return solve_box(grid, arrays, f, g, tol=tol, scale=scale)


def period_count(eps: float) -> int:
    """1/eps as an integer; eps must be the reciprocal of a positive integer."""
    if not eps > 0:
        raise ValidationError(f"eps must be positive, got {eps}", field='eps')
    periods = int(round(1.0 / eps))
    if periods < 1 or abs(periods * eps - 1.0) > 1e-9:
        raise DivisibilityError(
            f"1/eps = {1.0 / eps:.6g} is not an integer; use eps = 1/P so the box holds whole periods",
            field='eps', eps=eps,
        )
    return periods


def oscillatory_grid(dim: int, eps: float, cells_per_period: int) -> BoxGrid:
    """Box grid with h = eps / cells_per_period."""
    return BoxGrid(dim, period_count(eps) * cells_per_period)


def _torus_coefficient(coefficient: Union[CoefficientSpec, SymMatrixField],
                       cells_per_period: int) -> SymMatrixField:
    if isinstance(coefficient, SymMatrixField):
        resolution = coefficient.grid.resolution
        if resolution % cells_per_period:
            raise DivisibilityError(
                f"torus grid N={resolution} is not a multiple of {cells_per_period} cells per period; "
                "box nodes would fall between coefficient samples",
                field='cells_per_period',
            )
        return coefficient
    return realize(coefficient, PeriodicGrid(coefficient.dim, cells_per_period))


def sample_oscillatory(coefficient: SymMatrixField, grid: BoxGrid, cells_per_period: int):
    """a_ij(x/eps) on the box nodes: node m sits on torus node (m mod M) * (N/M)."""
    stride = coefficient.grid.resolution // cells_per_period
    index = (np.arange(grid.nodes) % cells_per_period) * stride
    selector = np.ix_(*([index] * grid.dim))
    return [(key, entry.values[selector]) for key, entry in coefficient.items()]


def solve_oscillatory(coefficient: Union[CoefficientSpec, SymMatrixField], eps: float,
                      f: BoxData, g: BoxData, cells_per_period: Optional[int] = None,
                      tol: Optional[float] = None,
                      max_unknowns: Optional[int] = None) -> DirichletSolution:
    """-a_ij(x/eps) u_{x_i x_j} = f with u = g on the boundary, h = eps / cells_per_period.

    A SymMatrixField coefficient is taken as already sampled on the torus; its
    resolution must be a multiple of ``cells_per_period`` (which defaults to it).
    """
    if cells_per_period is None:
        if isinstance(coefficient, SymMatrixField):
            cells_per_period = coefficient.grid.resolution
        else:
            cells_per_period = resolve_setting('HOMLAB_CELLS_PER_PERIOD')
    if cells_per_period < 2:
        raise ValidationError(f"cells_per_period must be >= 2, got {cells_per_period}",
                              field='cells_per_period')

    field = _torus_coefficient(coefficient, cells_per_period)
    grid = oscillatory_grid(field.dim, eps, cells_per_period)
    arrays = sample_oscillatory(field, grid, cells_per_period)
    logger.info("Solving oscillatory problem", eps=eps, intervals=grid.intervals,
                unknowns=grid.interior_size)
    return solve_box(grid, arrays, f, g, tol=tol, scale=max(1.0, field.sup_norm()),
                     max_unknowns=max_unknowns)


def _third_derivatives_exact(u: Polynomial) -> Dict[Tuple[int, int, int], Polynomial]:
    dim = u.dim
    return {
        (j, k, l): u.derivative(j).derivative(k).derivative(l)
        for j, k, l in itertools.product(range(dim), repeat=3)
    }


def _third_derivatives_fd(u: DirichletSolution) -> Dict[Tuple[int, int, int], np.ndarray]:
    """Three centered differences, kept on the nodes where every stencil fits.

    Each difference along an axis drops one node per face on that axis; the
    dropped band is filled with the nearest computed value.
    """
    h = u.grid.spacing
    dim = u.grid.dim
    if u.grid.intervals < 6:
        raise ValidationError("finite-difference third derivatives need at least 6 intervals",
                              field='intervals')

    def d(values, axis):
        values = np.moveaxis(values, axis, 0)
        return np.moveaxis((values[2:] - values[:-2]) / (2.0 * h), 0, axis)

    derivatives = {}
    for j, k, l in itertools.product(range(dim), repeat=3):
        band = [(m, m) for m in (sum(index == axis for index in (j, k, l)) for axis in range(dim))]
        derivatives[(j, k, l)] = np.pad(d(d(d(u.values, l), k), j), band, mode='edge')
    return derivatives


def corrector_source(c: np.ndarray, u: Union[Polynomial, DirichletSolution],
                     grid: BoxGrid) -> np.ndarray:
    """h = c^{kl}_j u_{x_j x_k x_l} on the box nodes."""
    c = np.asarray(getattr(c, 'c', c), dtype=float)
    dim = grid.dim
    if c.shape != (dim, dim, dim):
        raise ValidationError(f"obstruction tensor must have shape {(dim,) * 3}, got {c.shape}", field='c')
    h = np.zeros(grid.shape)
    if isinstance(u, Polynomial):
        derivatives = _third_derivatives_exact(u)
        coordinates = grid.coordinates()
        for (j, k, l), term in derivatives.items():
            if c[k, l, j] != 0.0:
                h += c[k, l, j] * np.broadcast_to(term.evaluate(*coordinates), grid.shape)
    else:
        for (j, k, l), term in _third_derivatives_fd(u).items():
            if c[k, l, j] != 0.0:
                h += c[k, l, j] * term
    return h


def solve_z(abar, c, u: Union[Polynomial, DirichletSolution], intervals: Optional[int] = None,
            tol: Optional[float] = None) -> DirichletSolution:
    """-abar_ij z_{x_i x_j} = h with z = 0 on the boundary.

    ``u`` is either the exact polynomial effective solution or a computed
    DirichletSolution, whose grid is then used.
    """
    abar = as_matrix(abar)
    if isinstance(u, DirichletSolution):
        if intervals is not None and intervals != u.grid.intervals:
            raise ValidationError("intervals must match the grid of the supplied solution",
                                  field='intervals')
        grid = u.grid
    else:
        if intervals is None:
            raise ValidationError("intervals is required when u is a polynomial", field='intervals')
        grid = BoxGrid(abar.shape[0], intervals)
    arrays, scale = _constant_arrays(abar, grid)
    h = corrector_source(c, u, grid)
    return solve_box(grid, arrays, h, 0.0, tol=tol, scale=scale)
