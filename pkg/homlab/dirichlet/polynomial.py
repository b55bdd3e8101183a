"""Multivariate polynomials for manufactured box data (exact derivatives)"""
from __future__ import annotations

from typing import Sequence, Union

import numpy as np
import numpy.polynomial.polynomial as npoly
from scipy.signal import convolve

from homlab.utils.error_handling import ValidationError

_EVALUATORS = {1: npoly.polyval, 2: npoly.polyval2d, 3: npoly.polyval3d}


class Polynomial:
    """p(x) = sum c[i, j, ...] x1^i x2^j ...; ``coefficients`` has one axis per variable."""

    def __init__(self, coefficients: np.ndarray):
        coefficients = np.array(coefficients, dtype=float)
        if coefficients.ndim not in (1, 2, 3):
            raise ValidationError(f"polynomials in 1 to 3 variables only, got {coefficients.ndim}")
        self.coefficients = coefficients

    @classmethod
    def constant(cls, dim: int, value: float) -> 'Polynomial':
        return cls(np.full((1,) * dim, float(value)))

    @classmethod
    def monomial(cls, dim: int, exponents: Sequence[int], scale: float = 1.0) -> 'Polynomial':
        if len(exponents) != dim:
            raise ValidationError(f"monomial needs {dim} exponents, got {len(exponents)}")
        coefficients = np.zeros([e + 1 for e in exponents])
        coefficients[tuple(exponents)] = scale
        return cls(coefficients)

    @classmethod
    def coordinate(cls, dim: int, axis: int, shift: float = 0.0) -> 'Polynomial':
        """x_axis - shift."""
        exponents = [0] * dim
        exponents[axis] = 1
        return cls.monomial(dim, exponents) - shift

    @property
    def dim(self) -> int:
        return self.coefficients.ndim

    @property
    def degree(self) -> int:
        nonzero = np.argwhere(self.coefficients != 0)
        return int(nonzero.sum(axis=1).max()) if len(nonzero) else 0

    def _promote(self, other) -> 'Polynomial':
        if isinstance(other, Polynomial):
            if other.dim != self.dim:
                raise ValidationError("polynomials in different numbers of variables")
            return other
        return Polynomial.constant(self.dim, float(other))

    def __add__(self, other) -> 'Polynomial':
        other = self._promote(other)
        shape = np.maximum(self.coefficients.shape, other.coefficients.shape)
        total = np.zeros(shape)
        total[tuple(slice(0, n) for n in self.coefficients.shape)] += self.coefficients
        total[tuple(slice(0, n) for n in other.coefficients.shape)] += other.coefficients
        return Polynomial(total)

    __radd__ = __add__

    def __neg__(self) -> 'Polynomial':
        return Polynomial(-self.coefficients)

    def __sub__(self, other) -> 'Polynomial':
        return self + (-self._promote(other))

    def __rsub__(self, other) -> 'Polynomial':
        return self._promote(other) - self

    def __mul__(self, other) -> 'Polynomial':
        if not isinstance(other, Polynomial):
            return Polynomial(self.coefficients * float(other))
        other = self._promote(other)
        return Polynomial(convolve(self.coefficients, other.coefficients, method='direct'))

    __rmul__ = __mul__

    def derivative(self, axis: int, order: int = 1) -> 'Polynomial':
        if not 0 <= axis < self.dim:
            raise ValidationError(f"axis {axis} out of range for {self.dim} variables")
        if self.coefficients.shape[axis] <= order:
            return Polynomial.constant(self.dim, 0.0)
        return Polynomial(npoly.polyder(self.coefficients, m=order, axis=axis))

    def evaluate(self, *coordinates: Union[np.ndarray, float]) -> np.ndarray:
        if len(coordinates) != self.dim:
            raise ValidationError(f"polynomial in {self.dim} variables got {len(coordinates)} coordinates")
        return _EVALUATORS[self.dim](*coordinates, self.coefficients)

    def to_source(self, prefix: str = 'x') -> str:
        """Expression-language form, e.g. ``-6*x1`` or ``x1^2*x2``."""
        terms = []
        for index in zip(*np.nonzero(self.coefficients)):
            value = float(self.coefficients[index])
            factors = [f"{prefix}{axis + 1}" + (f"^{power}" if power > 1 else "")
                       for axis, power in enumerate(index) if power]
            body = '*'.join(factors)
            if not factors:
                terms.append(repr(abs(value)))
            elif abs(value) == 1.0:
                terms.append(body)
            else:
                terms.append(f"{abs(value)!r}*{body}")
            terms[-1] = ('-' if value < 0 else '+') + terms[-1]
        if not terms:
            return '0'
        source = ''.join(terms)
        return source[1:] if source.startswith('+') else source

    def __repr__(self) -> str:
        return f"Polynomial({self.to_source()})"
