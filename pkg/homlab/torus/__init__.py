"""Periodic grid functions on the unit torus"""

from .fields import (
    PeriodicGrid,
    ScalarField,
    SymMatrixField,
    derivative,
    second_derivative,
    integrate,
    inner,
    l2_norm,
    shift_reflect,
    restrict,
)
