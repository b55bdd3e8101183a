"""
Explicit coefficient constructions

* ``prop31_bad``: a diagonal c-bad matrix obtained by rescaling diag(1, alpha)
  so that v = s D_1 r0 becomes the (1,1) corrector.
* ``thm16_step1`` / ``thm16_step2``: the perturbation turning any matrix into a
  nearby c-bad one; ``perturb_to_bad`` runs both and shrinks s until the
  result lies within delta of the start.
* ``a_s_family`` / ``limit_measure``: diag(a1, s a2) and the closed-form limit
  of its invariant measure as s grows.

All constructions are carried out on the grid, with the same difference
operators the solver uses, so the identities they rely on hold discretely.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from homlab import resolve_setting
from homlab.gallery.expression import Expression, parse_expression
from homlab.homogenize.pipeline import divergence_field, obstruction_tensor, solve_cell_problems
from homlab.periodic.solver import DiscreteOperator, InvariantMeasure, invariant_measure
from homlab.torus.fields import (
    PeriodicGrid,
    ScalarField,
    SymMatrixField,
    derivative,
    integrate,
    second_derivative,
)
from homlab.utils.enhanced_logging import get_logger
from homlab.utils.error_handling import (
    DegenerateConstructionError,
    NumericalError,
    SmallnessError,
    SPDViolationError,
    ValidationError,
)

logger = get_logger(__name__)

DEFAULT_ALPHA = 'exp(2*sin(2*pi*(y1+y2)))'
DEFAULT_XI = '0.2*sin(2*pi*t)'
DEFAULT_A1 = '1'
DEFAULT_A2 = '1+0.5*sin(2*pi*(y1+y2))'

# (log alpha)_{y1 y2} below this is treated as identically zero
LOG_ALPHA_MIXED_MIN = 1e-3

FieldSource = Union[str, Expression, ScalarField, float, int]


def sample(source: FieldSource, grid: PeriodicGrid, label: str = 'expression') -> ScalarField:
    """Grid samples of an expression in y1..yn (or pass-through for fields and numbers)."""
    if isinstance(source, ScalarField):
        if source.grid != grid:
            raise ValidationError(f"{label} lives on a different grid", field=label)
        return source
    if isinstance(source, (int, float)) and not isinstance(source, bool):
        return ScalarField.constant(grid, float(source))
    expression = source if isinstance(source, Expression) else parse_expression(
        source, variables=grid.variables().keys()
    )
    values = expression.evaluate(grid.variables())
    return ScalarField(grid, np.broadcast_to(np.asarray(values, dtype=float), grid.shape))


def sample_profile(source: Union[str, Expression], grid: PeriodicGrid) -> ScalarField:
    """xi(t) evaluated along t = y1 + ... + yn."""
    expression = source if isinstance(source, Expression) else parse_expression(
        source, variables=('t',)
    )
    t = sum(grid.coordinates())
    values = expression.evaluate({'t': t})
    return ScalarField(grid, np.broadcast_to(np.asarray(values, dtype=float), grid.shape))


def _require_plane(grid: PeriodicGrid, name: str) -> None:
    if grid.dim != 2:
        raise ValidationError(f"{name} is constructed in two dimensions only, got dim={grid.dim}",
                              field='dim')


def _check_smallness(s: Optional[float], max_admissible: float, name: str) -> float:
    if s is None:
        return 0.5 * max_admissible
    if s < 0:
        raise ValidationError(f"{name} must be nonnegative, got {s}", field=name)
    if s > max_admissible * (1.0 + 1e-12):
        raise SmallnessError(
            f"{name}={s:g} is above the largest admissible value {max_admissible:.6g} on this grid",
            parameter=name, value=s, max_admissible=max_admissible,
        )
    return float(s)


@dataclass(frozen=True)
class Prop31Construction:
    coefficient: SymMatrixField
    alpha: ScalarField
    r0: InvariantMeasure
    v: ScalarField
    s: float
    max_admissible_s: float
    predicted_c111: float

    def to_dict(self):
        a1 = self.coefficient.entry(0, 0)
        return {
            's': self.s,
            'max_admissible_s': self.max_admissible_s,
            'predicted_c111': self.predicted_c111,
            'a1_min': a1.min(),
            'a1_max': a1.max(),
        }


def max_admissible_s(q: ScalarField) -> float:
    """Largest s with |s q| <= 1/2 on the grid."""
    bound = q.max_abs()
    if bound == 0.0:
        raise DegenerateConstructionError("perturbation profile vanishes on the grid")
    return 0.5 / bound


def prop31_bad(alpha: FieldSource = DEFAULT_ALPHA, s: Optional[float] = None,
               grid: Optional[PeriodicGrid] = None, tol: Optional[float] = None) -> Prop31Construction:
    """A = a1 diag(1, alpha) with a1 = 1/(1 + D11 v + alpha D22 v), v = s D1 r0.

    v is then the (1,1) corrector of A with abar_11 = 1, and
    c^{11}_1 = -s int (D1 r0)^2 < 0.
    """
    if grid is None:
        grid = PeriodicGrid(2, resolve_setting('HOMLAB_GRID_N'))
    _require_plane(grid, 'prop31_bad')

    alpha_field = sample(alpha, grid, label='alpha')
    if alpha_field.min() <= 0.0:
        raise ValidationError("alpha must be positive on the grid", field='alpha')

    mixed = second_derivative(ScalarField(grid, np.log(alpha_field.values)), 0, 1)
    if mixed.max_abs() <= LOG_ALPHA_MIXED_MIN:
        raise DegenerateConstructionError(
            f"(log alpha)_y1y2 vanishes on the grid (max {mixed.max_abs():.3e}); "
            "diag(1, alpha) is then c-good and cannot be bent into a c-bad matrix",
            mixed_max=mixed.max_abs(),
        )

    base = SymMatrixField.from_arrays(grid, {(0, 0): 1.0, (1, 1): alpha_field.values})
    r0 = invariant_measure(base, tol=tol)

    w = derivative(r0.r, 0)
    if w.max_abs() <= 1e-10:
        raise DegenerateConstructionError("D1 r0 vanishes on the grid", w_max=w.max_abs())

    q = second_derivative(w, 0, 0) + alpha_field * second_derivative(w, 1, 1)
    s_max = max_admissible_s(q)
    s = _check_smallness(s, s_max, 's')

    a1 = 1.0 / (1.0 + s * q)
    coefficient = SymMatrixField.from_arrays(grid, {(0, 0): a1.values, (1, 1): (alpha_field * a1).values})
    coefficient.check_spd(resolve_setting('HOMLAB_SPD_MIN_EIGENVALUE'), label='prop31 matrix')

    predicted = -s * integrate(w * w)
    logger.info("Prop31 construction built", s=s, max_admissible_s=s_max, predicted_c111=predicted)
    return Prop31Construction(
        coefficient=coefficient,
        alpha=alpha_field,
        r0=r0,
        v=w * s,
        s=s,
        max_admissible_s=s_max,
        predicted_c111=predicted,
    )


@dataclass(frozen=True)
class Step1Result:
    coefficient: SymMatrixField
    measure: InvariantMeasure
    delta: float
    component: int
    divergence: Tuple[ScalarField, ...]
    perturbed: bool

    def to_dict(self):
        return {
            'delta': self.delta,
            'component': self.component + 1,
            'perturbed': self.perturbed,
            'divergence_norm': self.divergence[self.component].max_abs(),
        }


def _first_nonzero(components: Tuple[ScalarField, ...], tolerance: float) -> Optional[int]:
    for j, component in enumerate(components):
        if component.max_abs() > tolerance:
            return j
    return None


def _verify_measure(operator: DiscreteOperator, r: ScalarField, tol: float, label: str) -> Tuple[float, float]:
    residual, floor = operator.adjoint_residual(r)
    if residual > max(tol, floor):
        raise NumericalError(
            f"{label}: expected invariant measure has adjoint residual {residual:.3e}",
            residual=residual, tolerance=tol,
        )
    return residual, floor


def thm16_step1(A0: SymMatrixField, delta: float, xi: Union[str, Expression] = DEFAULT_XI,
                tol: Optional[float] = None, shrink: bool = True,
                drift_tol: Optional[float] = None) -> Step1Result:
    """Make some component of (a_ij r)_{y_i} nonzero without changing r.

    a11 += delta xi(y1+y2)/r0 and a22 -= delta xi(y1+y2)/r0; then
    (a_i1 r0)_{y_i} = delta xi'(y1+y2). A0 is returned unchanged when one of
    its components is already nonzero.
    """
    grid = A0.grid
    _require_plane(grid, 'thm16_step1')
    tol = resolve_setting('HOMLAB_SOLVER_TOL', tol)
    drift_tol = resolve_setting('HOMLAB_DRIFT_TOL', drift_tol)
    min_eigenvalue = resolve_setting('HOMLAB_SPD_MIN_EIGENVALUE')
    if delta < 0:
        raise ValidationError(f"delta must be nonnegative, got {delta}", field='delta')

    r0 = invariant_measure(A0, tol=tol)
    divergence = divergence_field(A0, r0)
    j = _first_nonzero(divergence, drift_tol)
    if j is not None:
        logger.info("Starting matrix already has a nonzero drift component", component=j + 1)
        return Step1Result(A0, r0, 0.0, j, divergence, perturbed=False)
    if delta == 0:
        return Step1Result(A0, r0, 0.0, 0, divergence, perturbed=False)

    profile = sample_profile(xi, grid)
    if derivative(profile, 0).max_abs() <= drift_tol:
        raise DegenerateConstructionError("xi' vanishes on the grid; choose a non-constant profile")

    requested = delta
    while True:
        bump = profile * delta / r0.r
        candidate = SymMatrixField(grid, {
            (0, 0): A0.entry(0, 0) + bump,
            (0, 1): A0.entry(0, 1),
            (1, 1): A0.entry(1, 1) - bump,
        })
        try:
            candidate.check_spd(min_eigenvalue, label='step-1 matrix')
            break
        except SPDViolationError:
            if not shrink or delta < 1e-12 * requested:
                raise
            delta *= 0.5
            logger.warning("Step-1 perturbation not positive definite, halving delta",
                           requested_delta=requested, delta=delta)

    operator = DiscreteOperator(candidate)
    residual, floor = _verify_measure(operator, r0.r, tol, 'step 1')
    measure = InvariantMeasure(r=r0.r, residual=residual, iterations=r0.iterations, floor=floor)
    divergence = divergence_field(candidate, measure)
    logger.info("Step 1 perturbation built", delta=delta,
                divergence_norm=divergence[0].max_abs())
    return Step1Result(candidate, measure, delta, 0, divergence, perturbed=True)


@dataclass(frozen=True)
class Step2Result:
    coefficient: SymMatrixField
    gamma: ScalarField
    phi: ScalarField
    measure: InvariantMeasure
    component: int
    s: float
    max_admissible_s: float
    base_c: np.ndarray
    predicted_c: np.ndarray

    @property
    def predicted_cjjj(self) -> float:
        j = self.component
        return float(self.predicted_c[j, j, j])

    def to_dict(self):
        return {
            's': self.s,
            'max_admissible_s': self.max_admissible_s,
            'component': self.component + 1,
            'predicted_c': self.predicted_c,
            'predicted_cjjj': self.predicted_cjjj,
            'gamma_min': self.gamma.min(),
            'gamma_max': self.gamma.max(),
            'measure_residual': self.measure.residual,
        }


class _Step2Base:
    """Everything step 2 needs from A1; computed once and reused across s."""

    def __init__(self, source: Union[SymMatrixField, Step1Result], j: Optional[int],
                 tol: float, drift_tol: float):
        if isinstance(source, Step1Result):
            self.coefficient = source.coefficient
            self.measure = source.measure
            self.divergence = source.divergence
            j = source.component if j is None else j
        else:
            self.coefficient = source
            self.measure = invariant_measure(source, tol=tol)
            self.divergence = divergence_field(source, self.measure)
        _require_plane(self.coefficient.grid, 'thm16_step2')

        if j is None:
            j = _first_nonzero(self.divergence, drift_tol)
        if j is None or self.divergence[j].max_abs() <= drift_tol:
            raise DegenerateConstructionError(
                "(a_ij r)_{y_i} vanishes; run step 1 first to create a nonzero component"
            )
        self.component = j
        self.operator = DiscreteOperator(self.coefficient)
        b = self.divergence[j]
        # a_ij D_ij b; gamma = 1 / (1 + s m)
        self.m = -self.operator.apply(b)
        negative = max(float(np.max(-self.m.values)), 0.0)
        if negative == 0.0:
            raise DegenerateConstructionError("step-2 profile has no negative part")
        self.max_admissible_s = 0.5 / negative

        cells = solve_cell_problems(self.operator, self.measure, tol=tol)
        self.abar = cells.abar
        self.base_c = obstruction_tensor(self.operator, self.measure, cells).c
        n = self.coefficient.dim
        self.cross = np.array([integrate(self.divergence[i] * b) for i in range(n)])

    def build(self, s: Optional[float], tol: float) -> Step2Result:
        s = _check_smallness(s, self.max_admissible_s, 's')
        b = self.divergence[self.component]
        factor = 1.0 + s * self.m
        gamma = 1.0 / factor
        coefficient = self.coefficient.scaled(gamma)
        coefficient.check_spd(resolve_setting('HOMLAB_SPD_MIN_EIGENVALUE'), label='step-2 matrix')

        r = self.measure.r * factor
        r = r / integrate(r)
        residual, floor = _verify_measure(DiscreteOperator(coefficient), r, tol, 'step 2')

        # c(A)^{kl}_i = c(A1)^{kl}_i - s abar1_kl int b_i b_j
        predicted = self.base_c - s * self.abar[:, :, None] * self.cross[None, None, :]
        return Step2Result(
            coefficient=coefficient,
            gamma=gamma,
            phi=b * s,
            measure=InvariantMeasure(r=r, residual=residual, iterations=0, floor=floor),
            component=self.component,
            s=s,
            max_admissible_s=self.max_admissible_s,
            base_c=self.base_c,
            predicted_c=predicted,
        )


def thm16_step2(A1: Union[SymMatrixField, Step1Result], s: Optional[float] = None,
                j: Optional[int] = None, tol: Optional[float] = None,
                drift_tol: Optional[float] = None) -> Step2Result:
    """A = gamma A1 with gamma = 1/(1 + a1_ij phi_{y_i y_j}), phi = s (a1_ij r1)_{y_i}."""
    tol = resolve_setting('HOMLAB_SOLVER_TOL', tol)
    drift_tol = resolve_setting('HOMLAB_DRIFT_TOL', drift_tol)
    result = _Step2Base(A1, j, tol, drift_tol).build(s, tol)
    logger.info("Step 2 rescaling built", s=result.s, component=result.component + 1,
                predicted=result.predicted_cjjj)
    return result


@dataclass(frozen=True)
class DensityWitness:
    step1: Step1Result
    step2: Step2Result
    delta: float
    distance: float
    halvings: int

    @property
    def coefficient(self) -> SymMatrixField:
        return self.step2.coefficient

    def to_dict(self):
        return {
            'delta': self.delta,
            'distance': self.distance,
            'halvings': self.halvings,
            'step1': self.step1,
            'step2': self.step2,
        }


def perturb_to_bad(A0: SymMatrixField, delta: float = 0.1, xi: Union[str, Expression] = DEFAULT_XI,
                   s: Optional[float] = None, tol: Optional[float] = None,
                   max_halvings: int = 40) -> DensityWitness:
    """A c-bad matrix within delta of A0 in the sup norm."""
    if not delta > 0:
        raise ValidationError(f"delta must be positive, got {delta}", field='delta')
    tol = resolve_setting('HOMLAB_SOLVER_TOL', tol)
    step1 = thm16_step1(A0, delta, xi, tol=tol)
    base = _Step2Base(step1, None, tol, resolve_setting('HOMLAB_DRIFT_TOL'))

    s = 0.5 * base.max_admissible_s if s is None else s
    for halvings in range(max_halvings + 1):
        step2 = base.build(s, tol)
        distance = step2.coefficient.distance(A0)
        if distance <= delta:
            logger.info("Density witness found", delta=delta, distance=distance, s=s,
                        halvings=halvings)
            return DensityWitness(step1, step2, delta, distance, halvings)
        s *= 0.5
    raise NumericalError(
        f"could not bring the perturbation within delta={delta:g} after {max_halvings} halvings",
        delta=delta, distance=distance,
    )


def _positive_field(source: FieldSource, grid: PeriodicGrid, label: str) -> ScalarField:
    field = sample(source, grid, label=label)
    if field.min() <= 0.0:
        raise ValidationError(f"{label} must be bounded below by a positive constant "
                              f"(min {field.min():.3e})", field=label)
    return field


def a_s_family(a1: FieldSource = DEFAULT_A1, a2: FieldSource = DEFAULT_A2, s: float = 1.0,
               grid: Optional[PeriodicGrid] = None) -> SymMatrixField:
    """diag(a1, s a2) for s >= 1."""
    if grid is None:
        grid = PeriodicGrid(2, resolve_setting('HOMLAB_GRID_N'))
    _require_plane(grid, 'a_s_family')
    if not s >= 1.0:
        raise ValidationError(f"s must be >= 1, got {s}", field='s')
    first = _positive_field(a1, grid, 'a1')
    second = _positive_field(a2, grid, 'a2')
    return SymMatrixField.from_arrays(grid, {(0, 0): first.values, (1, 1): (second * s).values})


def limit_measure(a1: FieldSource = DEFAULT_A1, a2: FieldSource = DEFAULT_A2,
                  grid: Optional[PeriodicGrid] = None) -> ScalarField:
    """r = B / (a2(y) int_0^1 a1/a2 dy2), B normalizing int r = 1."""
    if grid is None:
        grid = PeriodicGrid(2, resolve_setting('HOMLAB_GRID_N'))
    _require_plane(grid, 'limit_measure')
    first = _positive_field(a1, grid, 'a1')
    second = _positive_field(a2, grid, 'a2')
    row_mean = np.mean(first.values / second.values, axis=1, keepdims=True)
    r = ScalarField(grid, 1.0 / (second.values * row_mean))
    return r / integrate(r)
