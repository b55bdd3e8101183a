"""Singular periodic solves: invariant measures and cell problems"""

from .solver import (
    DiscreteOperator,
    InvariantMeasure,
    as_operator,
    invariant_measure,
    solve_singular,
    solve_singular_with_report,
)
