"""Grid functions on the unit torus T^n.

Scalar and symmetric-matrix valued periodic functions sampled on a uniform
grid, with centered finite differences, rectangle-rule quadrature and the
point reflection used by the shifted-even families.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from homlab.utils.enhanced_logging import get_logger
from homlab.utils.error_handling import SPDViolationError, ValidationError

logger = get_logger(__name__)

Number = Union[int, float]


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid with ``resolution`` nodes per axis on [0, 1)^dim."""

    dim: int
    resolution: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValidationError(f"dim must be 1, 2 or 3, got {self.dim}", field='dim')
        if self.resolution < 4 or self.resolution % 2:
            raise ValidationError(
                f"resolution must be an even integer >= 4, got {self.resolution}", field='N'
            )

    @property
    def spacing(self) -> float:
        return 1.0 / self.resolution

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.resolution,) * self.dim

    @property
    def size(self) -> int:
        return self.resolution ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def axis_coordinates(self) -> np.ndarray:
        return np.arange(self.resolution) * self.spacing

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        """Node coordinates y_1..y_n as arrays of ``shape``."""
        axis = self.axis_coordinates()
        return tuple(np.meshgrid(*([axis] * self.dim), indexing='ij'))

    def variables(self) -> Dict[str, np.ndarray]:
        """Coordinate arrays keyed by expression variable name (y1, y2, ...)."""
        return {f"y{axis + 1}": values for axis, values in enumerate(self.coordinates())}

    def _check_axis(self, axis: int) -> None:
        if not 0 <= axis < self.dim:
            raise ValidationError(f"axis {axis} out of range for dim {self.dim}", field='axis')


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            if values.size == self.grid.size:
                values = values.reshape(self.grid.shape)
            else:
                raise ValidationError(
                    f"field of shape {values.shape} does not match grid {self.grid.shape}"
                )
        if not np.all(np.isfinite(values)):
            raise ValidationError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def constant(cls, grid: PeriodicGrid, value: float) -> 'ScalarField':
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: PeriodicGrid,
                      function: Callable[..., np.ndarray]) -> 'ScalarField':
        values = np.broadcast_to(function(*grid.coordinates()), grid.shape)
        return cls(grid, values)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def min(self) -> float:
        return float(np.min(self.values))

    def max(self) -> float:
        return float(np.max(self.values))

    def _other(self, other: Union['ScalarField', Number]) -> Union[np.ndarray, float]:
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise ValidationError("fields live on different grids")
            return other.values
        return float(other)

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / self._other(other))

    def __rtruediv__(self, other):
        return ScalarField(self.grid, self._other(other) / self.values)

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


def _entry_key(i: int, j: int) -> Tuple[int, int]:
    return (i, j) if i <= j else (j, i)


@dataclass(frozen=True, eq=False)
class SymMatrixField:
    """Upper-triangle entries a_ij (i <= j) of a symmetric matrix field."""

    grid: PeriodicGrid
    entries: Dict[Tuple[int, int], ScalarField]

    def __post_init__(self):
        n = self.grid.dim
        expected = {(i, j) for i in range(n) for j in range(i, n)}
        if set(self.entries) != expected:
            raise ValidationError(
                f"matrix field needs entries {sorted(expected)}, got {sorted(self.entries)}"
            )
        for field in self.entries.values():
            if field.grid != self.grid:
                raise ValidationError("matrix entries live on different grids")

    @classmethod
    def from_arrays(cls, grid: PeriodicGrid,
                    arrays: Dict[Tuple[int, int], Union[np.ndarray, Number]]) -> 'SymMatrixField':
        """Missing off-diagonal entries default to zero."""
        entries = {}
        for i in range(grid.dim):
            for j in range(i, grid.dim):
                value = arrays.get((i, j), arrays.get((j, i), 0.0 if i != j else None))
                if value is None:
                    raise ValidationError(f"diagonal entry a{i + 1}{i + 1} is required")
                entries[(i, j)] = ScalarField(grid, np.broadcast_to(np.asarray(value, float), grid.shape))
        return cls(grid, entries)

    @classmethod
    def identity(cls, grid: PeriodicGrid) -> 'SymMatrixField':
        return cls.from_arrays(grid, {(i, i): 1.0 for i in range(grid.dim)})

    @property
    def dim(self) -> int:
        return self.grid.dim

    def entry(self, i: int, j: int) -> ScalarField:
        return self.entries[_entry_key(i, j)]

    def items(self) -> Iterator[Tuple[Tuple[int, int], ScalarField]]:
        return iter(sorted(self.entries.items()))

    def is_diagonal(self) -> bool:
        return all(not np.any(field.values) for (i, j), field in self.entries.items() if i != j)

    def to_array(self) -> np.ndarray:
        """Stacked matrices of shape grid.shape + (n, n)."""
        n = self.dim
        stacked = np.empty(self.grid.shape + (n, n))
        for i in range(n):
            for j in range(n):
                stacked[..., i, j] = self.entry(i, j).values
        return stacked

    @cached_property
    def eigenvalue_bounds(self) -> Tuple[float, float]:
        eigenvalues = np.linalg.eigvalsh(self.to_array())
        return float(eigenvalues[..., 0].min()), float(eigenvalues[..., -1].max())

    def min_eigenvalue(self) -> float:
        return self.eigenvalue_bounds[0]

    def sup_norm(self) -> float:
        """C^0 norm: largest entry magnitude over the grid."""
        return max(field.max_abs() for field in self.entries.values())

    def distance(self, other: 'SymMatrixField') -> float:
        return max((self.entry(i, j) - other.entry(i, j)).max_abs() for (i, j) in self.entries)

    def scaled(self, factor: Union[ScalarField, Number]) -> 'SymMatrixField':
        return SymMatrixField(self.grid, {key: field * factor for key, field in self.entries.items()})

    def check_spd(self, min_eigenvalue: float, label: str = 'coefficient') -> float:
        """Raise SPDViolationError unless every node has lambda_min >= min_eigenvalue."""
        smallest = self.min_eigenvalue()
        if smallest < min_eigenvalue:
            raise SPDViolationError(
                f"{label} is not positive definite on the grid "
                f"(smallest eigenvalue {smallest:.3e} < {min_eigenvalue:.1e})",
                min_eigenvalue=smallest,
            )
        logger.debug("SPD check passed", label=label, margin=smallest - min_eigenvalue)
        return smallest


def derivative(f: ScalarField, axis: int) -> ScalarField:
    """Centered first difference along ``axis`` with periodic wrap."""
    f.grid._check_axis(axis)
    h = f.grid.spacing
    values = f.values
    return ScalarField(f.grid, (np.roll(values, -1, axis) - np.roll(values, 1, axis)) / (2.0 * h))


def second_derivative(f: ScalarField, axis_i: int, axis_j: int) -> ScalarField:
    """3-point second difference (i == j) or composed centered differences (i != j).

    The mixed case always differentiates along the smaller axis first, so the
    result does not depend on the argument order.
    """
    f.grid._check_axis(axis_i)
    f.grid._check_axis(axis_j)
    if axis_i == axis_j:
        h = f.grid.spacing
        values = f.values
        return ScalarField(
            f.grid,
            (np.roll(values, -1, axis_i) - 2.0 * values + np.roll(values, 1, axis_i)) / (h * h),
        )
    first, second = sorted((axis_i, axis_j))
    return derivative(derivative(f, first), second)


def integrate(f: ScalarField) -> float:
    """Rectangle rule over the unit torus."""
    return float(np.sum(f.values) * f.grid.cell_volume)


def inner(f: ScalarField, g: ScalarField) -> float:
    return integrate(f * g)


def l2_norm(f: ScalarField) -> float:
    return float(np.sqrt(integrate(f * f)))


def snap_center(grid: PeriodicGrid, center: Union[Number, Sequence[Number]]) -> Tuple[int, ...]:
    """Reflection center as integers m with 2*center = m*h (half-grid snapping)."""
    if np.ndim(center) == 0:
        center = [float(center)] * grid.dim
    if len(center) != grid.dim:
        raise ValidationError(f"center needs {grid.dim} components, got {len(center)}", field='center')
    doubled = [2.0 * float(c) * grid.resolution for c in center]
    snapped = tuple(int(round(value)) for value in doubled)
    if any(abs(value - m) > 1e-9 for value, m in zip(doubled, snapped)):
        logger.warning("Reflection center snapped to the half-grid",
                       requested=list(center),
                       snapped=[m / (2.0 * grid.resolution) for m in snapped])
    return snapped


def shift_reflect(f: ScalarField, center: Union[Number, Sequence[Number]]) -> ScalarField:
    """y -> f(2*center - y), center snapped to the half-grid."""
    grid = f.grid
    values = f.values
    for axis, m in enumerate(snap_center(grid, center)):
        index = (m - np.arange(grid.resolution)) % grid.resolution
        values = np.take(values, index, axis=axis)
    return ScalarField(grid, values)


def restrict(f: ScalarField, grid: PeriodicGrid) -> ScalarField:
    """Sample a fine-grid field on a coarser grid whose nodes it contains."""
    if grid.dim != f.grid.dim or f.grid.resolution % grid.resolution:
        raise ValidationError(
            f"grid N={grid.resolution} does not nest in N={f.grid.resolution}"
        )
    stride = f.grid.resolution // grid.resolution
    return ScalarField(grid, f.values[(slice(None, None, stride),) * grid.dim])


def as_matrix(value: Union[np.ndarray, Sequence[Sequence[Number]]], dim: Optional[int] = None) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(value, dtype=float))
    if matrix.shape[0] != matrix.shape[1] or (dim is not None and matrix.shape[0] != dim):
        raise ValidationError(f"expected a {dim}x{dim} matrix, got shape {matrix.shape}")
    return matrix
