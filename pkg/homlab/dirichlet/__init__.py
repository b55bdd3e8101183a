"""Finite-difference Dirichlet problems on the unit box"""

from .polynomial import Polynomial
from .solver import (
    BoxGrid,
    DirichletSolution,
    box_values,
    corrector_source,
    oscillatory_grid,
    period_count,
    solve_box,
    solve_effective,
    solve_oscillatory,
    solve_z,
)
