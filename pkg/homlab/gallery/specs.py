"""
Coefficient specifications

A ``CoefficientSpec`` names a family and its parameters; ``realize`` samples
it on a periodic grid and enforces positive definiteness.  Free functions are
expression strings, so a spec round-trips through JSON unchanged.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from homlab import resolve_setting
from homlab.gallery import constructions
from homlab.gallery.expression import parse_expression
from homlab.models import CoefficientVariant
from homlab.torus.fields import PeriodicGrid, ScalarField, SymMatrixField, integrate, shift_reflect
from homlab.utils.enhanced_logging import get_logger
from homlab.utils.error_handling import ValidationError

logger = get_logger(__name__)

Variant = CoefficientVariant

# Short names accepted wherever a spec is named (CLI --spec, config files)
ALIASES = {
    'scalar': Variant.SCALAR_TIMES_IDENTITY,
    'separable': Variant.DIAGONAL_SEPARABLE,
    'missing_own': Variant.DIAGONAL_MISSING_OWN_VARIABLE,
    'prop31': Variant.PROP31_BAD,
    'thm16': Variant.THM16_PERTURBED,
    'a_s': Variant.A_S_FAMILY,
}

C_GOOD_FAMILIES = (
    Variant.IDENTITY,
    Variant.SCALAR_TIMES_IDENTITY,
    Variant.DIAGONAL_SEPARABLE,
    Variant.DIAGONAL_MISSING_OWN_VARIABLE,
    Variant.LAYERED,
    Variant.SHIFTED_EVEN,
)

_SEPARABLE = ['1+0.5*sin(2*pi*y1)', '1+0.3*cos(2*pi*y2)', '1+0.4*sin(2*pi*y3)']
_MISSING_OWN = {
    1: ['2'],
    2: ['1+0.5*sin(2*pi*y2)', '1+0.5*sin(2*pi*y1)'],
    3: ['1+0.5*sin(2*pi*y2)', '1+0.5*sin(2*pi*y3)', '1+0.5*sin(2*pi*y1)'],
}
_LAYERED = {
    1: {'a11': '1+0.5*sin(2*pi*y1)'},
    2: {
        'a11': '1+0.5*sin(2*pi*y1)',
        'a12': '0.25*(1+0.5*sin(2*pi*y1))',
        'a22': '1+0.3*cos(2*pi*y1)',
    },
    3: {
        'a11': '1+0.5*sin(2*pi*y1)',
        'a22': '1+0.3*cos(2*pi*y1)',
        'a33': '1+0.2*sin(4*pi*y1)',
    },
}
_SHIFTED_EVEN = {
    1: {'a11': '1+0.5*sin(2*pi*y1)+0.2*cos(6*pi*y1)'},
    2: {
        'a11': '1+0.4*sin(2*pi*y1)+0.2*cos(2*pi*y2)',
        'a12': '0.2*sin(2*pi*(y1+y2))',
        'a22': '1+0.3*sin(2*pi*y2)*cos(2*pi*y1)',
    },
    3: {
        'a11': '1+0.4*sin(2*pi*y1)+0.2*cos(2*pi*y3)',
        'a12': '0.1*sin(2*pi*(y1+y2))',
        'a22': '1+0.3*sin(2*pi*y2)',
        'a33': '1+0.3*cos(2*pi*(y1-y3))',
    },
}
_CENTER = [0.25, 0.125, 0.375]

PARAMETERS = {
    Variant.IDENTITY: (),
    Variant.EXPRESSION: ('entries',),
    Variant.SCALAR_TIMES_IDENTITY: ('a',),
    Variant.DIAGONAL_SEPARABLE: ('entries',),
    Variant.DIAGONAL_MISSING_OWN_VARIABLE: ('entries',),
    Variant.LAYERED: ('entries',),
    Variant.SHIFTED_EVEN: ('entries', 'center'),
    Variant.PROP31_BAD: ('alpha', 's'),
    Variant.THM16_PERTURBED: ('base', 'delta', 's', 'xi'),
    Variant.A_S_FAMILY: ('a1', 'a2', 's'),
}


def default_params(variant: Variant, dim: int) -> Dict[str, Any]:
    if variant is Variant.IDENTITY:
        return {}
    if variant is Variant.EXPRESSION:
        return {'entries': {f"a{i}{i}": '1' for i in range(1, dim + 1)}}
    if variant is Variant.SCALAR_TIMES_IDENTITY:
        return {'a': '1+0.5*sin(2*pi*y1)'}
    if variant is Variant.DIAGONAL_SEPARABLE:
        return {'entries': _SEPARABLE[:dim]}
    if variant is Variant.DIAGONAL_MISSING_OWN_VARIABLE:
        return {'entries': list(_MISSING_OWN[dim])}
    if variant is Variant.LAYERED:
        return {'entries': dict(_LAYERED[dim])}
    if variant is Variant.SHIFTED_EVEN:
        return {'entries': dict(_SHIFTED_EVEN[dim]), 'center': _CENTER[:dim]}
    if variant is Variant.PROP31_BAD:
        return {'alpha': constructions.DEFAULT_ALPHA, 's': None}
    if variant is Variant.THM16_PERTURBED:
        return {'base': {'variant': Variant.IDENTITY.value, 'dim': dim, 'params': {}},
                'delta': 0.1, 's': None, 'xi': constructions.DEFAULT_XI}
    if variant is Variant.A_S_FAMILY:
        return {'a1': constructions.DEFAULT_A1, 'a2': constructions.DEFAULT_A2, 's': 1.0}
    raise ValidationError(f"unknown variant {variant}", field='variant')


def parse_variant(name: Any) -> Variant:
    if isinstance(name, Variant):
        return name
    key = str(name).strip().lower()
    if key in ALIASES:
        return ALIASES[key]
    try:
        return Variant(key)
    except ValueError:
        choices = sorted([v.value for v in Variant] + list(ALIASES))
        raise ValidationError(f"unknown coefficient family '{name}' (choices: {', '.join(choices)})",
                              field='variant') from None


@dataclass(frozen=True)
class CoefficientSpec:
    variant: Variant
    dim: int = 2
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'variant', parse_variant(self.variant))
        if self.dim not in (1, 2, 3):
            raise ValidationError(f"dim must be 1, 2 or 3, got {self.dim}", field='dim')
        unknown = set(self.params) - set(PARAMETERS[self.variant])
        if unknown:
            raise ValidationError(
                f"{self.variant.value} takes parameters {list(PARAMETERS[self.variant])}, "
                f"got unknown {sorted(unknown)}", field='params'
            )
        merged = default_params(self.variant, self.dim)
        merged.update({key: value for key, value in self.params.items() if value is not None})
        object.__setattr__(self, 'params', merged)

    @classmethod
    def named(cls, name: str, dim: int = 2, **params) -> 'CoefficientSpec':
        return cls(parse_variant(name), dim, params)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'CoefficientSpec':
        if not isinstance(data, Mapping) or 'variant' not in data:
            raise ValidationError("coefficient spec needs a 'variant' field", field='spec')
        try:
            dim = int(data.get('dim', 2))
        except (TypeError, ValueError):
            raise ValidationError(f"dim must be an integer, got {data.get('dim')!r}", field='dim') from None
        params = data.get('params') or {}
        if not isinstance(params, Mapping):
            raise ValidationError("params must be an object", field='params')
        return cls(parse_variant(data['variant']), dim, dict(params))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'variant': self.variant.value,
            'dim': self.dim,
            'params': copy.deepcopy(self.params),
        }

    def base_spec(self) -> 'CoefficientSpec':
        base = self.params['base']
        return base if isinstance(base, CoefficientSpec) else CoefficientSpec.from_dict(base)


def _variables(dim: int) -> List[str]:
    return [f"y{axis + 1}" for axis in range(dim)]


def _entry_key(name: str, dim: int):
    if len(name) != 3 or name[0] != 'a' or not name[1:].isdigit():
        raise ValidationError(f"matrix entry names look like a11, a12, ...; got '{name}'", field='entries')
    i, j = int(name[1]) - 1, int(name[2]) - 1
    if not (0 <= i < dim and 0 <= j < dim):
        raise ValidationError(f"entry {name} out of range for dim {dim}", field='entries')
    return (min(i, j), max(i, j))


def _entry_arrays(entries: Mapping[str, Any], grid: PeriodicGrid,
                  allowed: Optional[Sequence[str]] = None) -> Dict[tuple, np.ndarray]:
    if not isinstance(entries, Mapping):
        raise ValidationError("entries must map a11, a12, ... to expressions", field='entries')
    variables = list(allowed) if allowed is not None else _variables(grid.dim)
    arrays = {}
    for name, source in entries.items():
        key = _entry_key(name, grid.dim)
        if key in arrays:
            raise ValidationError(f"entry {name} given twice", field='entries')
        expression = parse_expression(str(source), variables=variables)
        arrays[key] = np.broadcast_to(np.asarray(expression.evaluate(grid.variables()), float), grid.shape)
    return arrays


def _diagonal_expressions(entries: Sequence[Any], dim: int, own_variable: bool):
    if not isinstance(entries, (list, tuple)) or len(entries) != dim:
        raise ValidationError(f"entries must list {dim} diagonal expressions", field='entries')
    expressions = []
    for axis, source in enumerate(entries):
        expression = parse_expression(str(source), variables=_variables(dim))
        own = f"y{axis + 1}"
        if own_variable and not expression.variables <= {own}:
            raise ValidationError(
                f"diagonal entry {axis + 1} may depend on {own} only, uses {sorted(expression.variables)}",
                field='entries',
            )
        if not own_variable and own in expression.variables:
            raise ValidationError(f"diagonal entry {axis + 1} must not depend on {own}", field='entries')
        expressions.append(expression)
    return expressions


def _diagonal(grid: PeriodicGrid, expressions) -> SymMatrixField:
    env = grid.variables()
    return SymMatrixField.from_arrays(grid, {
        (axis, axis): np.broadcast_to(np.asarray(expression.evaluate(env), float), grid.shape)
        for axis, expression in enumerate(expressions)
    })


def _shifted_even(spec: CoefficientSpec, grid: PeriodicGrid) -> SymMatrixField:
    profile = SymMatrixField.from_arrays(grid, _entry_arrays(spec.params['entries'], grid))
    center = spec.params['center']
    return SymMatrixField(grid, {
        key: (entry + shift_reflect(entry, center)) * 0.5 for key, entry in profile.items()
    })


def construct(spec: CoefficientSpec, grid: PeriodicGrid, tol: Optional[float] = None):
    """Construction object (with side data) for the prop31_bad / thm16_perturbed variants."""
    params = spec.params
    s = None if params.get('s') is None else float(params['s'])
    if spec.variant is Variant.PROP31_BAD:
        return constructions.prop31_bad(params['alpha'], s, grid, tol=tol)
    if spec.variant is Variant.THM16_PERTURBED:
        base = realize(spec.base_spec(), grid)
        step1 = constructions.thm16_step1(base, float(params['delta']), params['xi'], tol=tol)
        return constructions.thm16_step2(step1, s, tol=tol)
    raise ValidationError(f"{spec.variant.value} is not a construction", field='variant')


def realize(spec: CoefficientSpec, grid: PeriodicGrid) -> SymMatrixField:
    """Sample ``spec`` on ``grid``; the result is positive definite at every node."""
    if spec.dim != grid.dim:
        raise ValidationError(f"spec has dim {spec.dim} but the grid has dim {grid.dim}", field='dim')
    variant = spec.variant
    params = spec.params

    if variant is Variant.IDENTITY:
        coefficient = SymMatrixField.identity(grid)
    elif variant is Variant.EXPRESSION:
        coefficient = SymMatrixField.from_arrays(grid, _entry_arrays(params['entries'], grid))
    elif variant is Variant.SCALAR_TIMES_IDENTITY:
        a = constructions.sample(str(params['a']), grid, label='a')
        coefficient = SymMatrixField.from_arrays(grid, {(i, i): a.values for i in range(grid.dim)})
    elif variant is Variant.DIAGONAL_SEPARABLE:
        coefficient = _diagonal(grid, _diagonal_expressions(params['entries'], grid.dim, True))
    elif variant is Variant.DIAGONAL_MISSING_OWN_VARIABLE:
        coefficient = _diagonal(grid, _diagonal_expressions(params['entries'], grid.dim, False))
    elif variant is Variant.LAYERED:
        coefficient = SymMatrixField.from_arrays(grid, _entry_arrays(params['entries'], grid, allowed=['y1']))
    elif variant is Variant.SHIFTED_EVEN:
        coefficient = _shifted_even(spec, grid)
    elif variant in (Variant.PROP31_BAD, Variant.THM16_PERTURBED):
        coefficient = construct(spec, grid).coefficient
    elif variant is Variant.A_S_FAMILY:
        coefficient = constructions.a_s_family(params['a1'], params['a2'], float(params['s']), grid)
    else:
        raise ValidationError(f"unknown variant {variant}", field='variant')

    margin = coefficient.check_spd(resolve_setting('HOMLAB_SPD_MIN_EIGENVALUE'), label=variant.value)
    logger.debug("Coefficient realized", variant=variant.value, N=grid.resolution,
                 min_eigenvalue=margin)
    return coefficient


def closed_form_measure(spec: CoefficientSpec, grid: PeriodicGrid) -> ScalarField:
    """Known invariant measures of the c-good families, normalized on the grid.

    c/a for a I, c/(a_1...a_n) for diag(a_i(y_i)), 1 when a_i does not depend
    on y_i, and c/a_11(y_1) for matrices depending on y_1 only.
    """
    variant = spec.variant
    if variant in (Variant.IDENTITY, Variant.DIAGONAL_MISSING_OWN_VARIABLE):
        return ScalarField.constant(grid, 1.0)
    coefficient = realize(spec, grid)
    if variant is Variant.SCALAR_TIMES_IDENTITY or variant is Variant.LAYERED:
        r = 1.0 / coefficient.entry(0, 0)
    elif variant is Variant.DIAGONAL_SEPARABLE:
        product = coefficient.entry(0, 0)
        for axis in range(1, grid.dim):
            product = product * coefficient.entry(axis, axis)
        r = 1.0 / product
    else:
        raise ValidationError(f"no closed-form invariant measure for {variant.value}", field='variant')
    return r / integrate(r)
