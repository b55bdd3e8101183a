"""
HomLab command line

Every command writes one result document (JSON) or one table (CSV) to
standard output or ``--output``; logs and error diagnostics go to standard
error.  Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""
from typing import Any, Dict, List, Optional, Tuple

import click
import numpy as np

from homlab import create_context
from homlab.cli.output import emit, error_line
from homlab.cli.run_config import RunConfig, parse_param_pairs
from homlab.gallery.specs import (
    ALIASES,
    CoefficientSpec,
    Variant,
    closed_form_measure,
    construct,
    default_params,
    realize,
)
from homlab.homogenize.pipeline import (
    divergence_field,
    effective_matrix,
    homogenize,
    solve_cell_problems,
)
from homlab.models import Command
from homlab.periodic.solver import invariant_measure
from homlab.rates.study import run_asymptotic_study, run_rate_study
from homlab.torus.fields import PeriodicGrid, SymMatrixField, l2_norm
from homlab.utils.enhanced_logging import correlation_context, get_logger, new_run_id
from homlab.utils.error_handling import HomlabError

logger = get_logger(__name__)

CONSTRUCTIONS = (Variant.PROP31_BAD, Variant.THM16_PERTURBED)

# families whose invariant measure is known in closed form
CLOSED_FORM = (
    Variant.IDENTITY,
    Variant.SCALAR_TIMES_IDENTITY,
    Variant.DIAGONAL_SEPARABLE,
    Variant.DIAGONAL_MISSING_OWN_VARIABLE,
    Variant.LAYERED,
)


class HomlabGroup(click.Group):
    """Turns every failure into one JSON line on stderr and the matching exit code."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.Abort):
            raise
        except click.ClickException as e:
            click.echo(error_line(e, correlation_context.correlation_id), err=True)
            ctx.exit(1)
        except HomlabError as e:
            logger.error(f"{type(e).__name__}: {e.message}", category=e.category.value)
            click.echo(error_line(e, correlation_context.correlation_id), err=True)
            ctx.exit(e.exit_code)
        except Exception as e:
            logger.error(f"Unexpected failure: {e}", error_type=type(e).__name__)
            click.echo(error_line(e, correlation_context.correlation_id), err=True)
            ctx.exit(2)


def _options(*decorators):
    def apply(func):
        for decorator in reversed(decorators):
            func = decorator(func)
        return func
    return apply


config_option = click.option('--config', 'config_path', default=None,
                             help='YAML or JSON file with the run configuration; flags override it.')
output_options = _options(
    click.option('--format', 'output_format', type=click.Choice(['json', 'csv'], case_sensitive=False),
                 default=None, help='json (default) or csv.'),
    click.option('--output', '-o', default=None, help='Write the result here instead of stdout.'),
)
grid_options = _options(
    click.option('--n', 'dim', type=int, default=None, help='Space dimension 1, 2 or 3 (default 2).'),
    click.option('--N', 'resolution', type=int, default=None,
                 help='Torus grid nodes per axis, even and >= 4 (default HOMLAB_GRID_N).'),
    click.option('--tol', type=float, default=None, help='Residual tolerance of the periodic solves.'),
)
spec_options = _options(
    click.option('--spec', default=None,
                 help='Family name or alias, inline JSON spec, or path to a spec file.'),
    click.option('--alpha', default=None, help='prop31: expression alpha(y1, y2) > 0.'),
    click.option('--s', 's', type=float, default=None,
                 help='prop31/thm16: smallness parameter (default half the admissible maximum).'),
    click.option('--delta', type=float, default=None, help='thm16: perturbation size of step 1.'),
    click.option('--xi', default=None, help='thm16: profile xi(t), 1-periodic and odd.'),
    click.option('--param', 'params', multiple=True,
                 help='Any other family parameter as key=value (repeatable).'),
)


def _run_config(command: Command, config_path: Optional[str], alpha=None, s=None, delta=None,
                xi=None, params=(), validate: bool = True, **flags: Any) -> RunConfig:
    overrides = parse_param_pairs(params)
    overrides.update({key: value for key, value in
                      {'alpha': alpha, 's': s, 'delta': delta, 'xi': xi}.items() if value is not None})
    config = RunConfig.build(command, config_path, param_overrides=overrides, **flags)
    return config.validate() if validate else config


def _grid_table(grid: PeriodicGrid, columns: Dict[str, np.ndarray]) -> Tuple[List[str], List[List[float]]]:
    """y1..yn followed by one column per field; one row per grid node."""
    header = [f"y{axis + 1}" for axis in range(grid.dim)] + list(columns)
    stacked = [c.reshape(-1) for c in grid.coordinates()]
    stacked += [np.asarray(values, dtype=float).reshape(-1) for values in columns.values()]
    return header, np.column_stack(stacked).tolist()


def _coefficient_columns(coefficient: SymMatrixField) -> Dict[str, np.ndarray]:
    return {f"a{i + 1}{j + 1}": entry.values for (i, j), entry in coefficient.items()}


def _construction(spec: CoefficientSpec, grid: PeriodicGrid, tol: float):
    if spec.variant in CONSTRUCTIONS:
        construction = construct(spec, grid, tol=tol)
        return construction, construction.coefficient
    return None, realize(spec, grid)


def _comparison(construction, c: np.ndarray) -> Dict[str, Any]:
    """Computed c^{jj}_j next to the value the construction predicts."""
    if hasattr(construction, 'predicted_c111'):
        j, predicted = 0, construction.predicted_c111
    else:
        j, predicted = construction.component, construction.predicted_cjjj
    computed = float(c[j, j, j])
    return {
        'index': [j + 1] * 3,
        'computed': computed,
        'predicted': predicted,
        'relative_error': abs(computed - predicted) / abs(predicted) if predicted else None,
    }


@click.group(cls=HomlabGroup)
@click.option('--env', 'config_name', envvar='HOMLAB_ENV', default='default',
              type=click.Choice(['development', 'testing', 'production', 'default']),
              help='Configuration profile (env HOMLAB_ENV).')
@click.pass_context
def cli(ctx, config_name):
    """Periodic homogenization of non-divergence form elliptic operators."""
    ctx.obj = {'settings': create_context(config_name), 'run_id': new_run_id()}
    logger.debug("Run started", command=ctx.invoked_subcommand, env=config_name)


@cli.command()
@config_option
@spec_options
@grid_options
@click.option('--threshold', type=float, default=None, help='c-bad when max|c| exceeds this.')
@output_options
def classify(config_path, spec, alpha, s, delta, xi, params, dim, resolution, tol, threshold,
             output_format, output):
    """Compute r, abar and the obstruction tensor c and classify c-good / c-bad.

    CSV columns: k, l, j, c (1-based indices).
    """
    config = _run_config(Command.CLASSIFY, config_path, alpha, s, delta, xi, params, spec=spec,
                         dim=dim, N=resolution, tol=tol, threshold=threshold,
                         format=output_format, output=output)
    grid = PeriodicGrid(config.dim, config.N)
    construction, coefficient = _construction(config.spec, grid, config.tol)
    result = homogenize(coefficient, tol=config.tol, threshold=config.threshold)

    payload = result.to_dict()
    if construction is not None:
        payload['construction'] = construction
        payload['comparison'] = _comparison(construction, result.tensor.c)

    n = grid.dim
    rows = [[k + 1, l + 1, j + 1, float(result.tensor.c[k, l, j])]
            for k in range(n) for l in range(n) for j in range(n)]
    emit(config, payload, ['k', 'l', 'j', 'c'], rows)


@cli.command()
@config_option
@spec_options
@grid_options
@output_options
def effective(config_path, spec, alpha, s, delta, xi, params, dim, resolution, tol,
              output_format, output):
    """Invariant measure r and effective matrix abar = int A r.

    CSV columns: y1..yn, r, b1..bn (drift (a_ij r)_{y_i}).
    """
    config = _run_config(Command.EFFECTIVE, config_path, alpha, s, delta, xi, params, spec=spec,
                         dim=dim, N=resolution, tol=tol, format=output_format, output=output)
    grid = PeriodicGrid(config.dim, config.N)
    _, coefficient = _construction(config.spec, grid, config.tol)
    measure = invariant_measure(coefficient, tol=config.tol)
    abar = effective_matrix(coefficient, measure)
    drift = divergence_field(coefficient, measure)

    payload: Dict[str, Any] = {
        'grid': {'dim': grid.dim, 'N': grid.resolution},
        'abar': abar,
        'abar_eigenvalues': np.linalg.eigvalsh(abar),
        'measure': measure,
        'drift_norm': max(component.max_abs() for component in drift),
    }
    if config.spec.variant in CLOSED_FORM:
        payload['closed_form_error'] = (measure.r - closed_form_measure(config.spec, grid)).max_abs()

    columns = {'r': measure.r.values}
    columns.update({f"b{j + 1}": component.values for j, component in enumerate(drift)})
    header, rows = _grid_table(grid, columns)
    emit(config, payload, header, rows)


@cli.command()
@config_option
@spec_options
@grid_options
@click.option('--pair', default=None, help='Cell problem k,l (1-based, default 1,1).')
@output_options
def cell(config_path, spec, alpha, s, delta, xi, params, dim, resolution, tol, pair,
         output_format, output):
    """Corrector v^{kl} of one cell problem (mean-zero gauge).

    CSV columns: y1..yn, v.
    """
    config = _run_config(Command.CELL, config_path, alpha, s, delta, xi, params, spec=spec,
                         dim=dim, N=resolution, tol=tol, pair=pair, format=output_format,
                         output=output)
    grid = PeriodicGrid(config.dim, config.N)
    _, coefficient = _construction(config.spec, grid, config.tol)
    measure = invariant_measure(coefficient, tol=config.tol)
    cells = solve_cell_problems(coefficient, measure, tol=config.tol)
    k, l = (index - 1 for index in config.pair)
    v = cells.corrector(k, l)

    payload = {
        'grid': {'dim': grid.dim, 'N': grid.resolution},
        'pair': config.pair,
        'abar': cells.abar,
        'abar_kl': float(cells.abar[k, l]),
        'residual': cells.residuals[(min(k, l), max(k, l))],
        'max_abs_v': v.max_abs(),
        'l2_v': l2_norm(v),
    }
    header, rows = _grid_table(grid, {'v': v.values})
    emit(config, payload, header, rows)


@cli.command()
@config_option
@spec_options
@click.option('--n', 'dim', type=int, default=None, help='Space dimension 1, 2 or 3 (default 2).')
@click.option('--tol', type=float, default=None, help='Residual tolerance of all solves.')
@click.option('--threshold', type=float, default=None, help='c-bad when max|c| exceeds this.')
@click.option('--eps', default=None, help='eps ladder as reciprocals 4,8,16,32 (or 1/4,1/8,...).')
@click.option('--data', default=None, help='Manufactured data cubic:j,k,l (1-based, default cubic:1,1,1).')
@click.option('--center', type=float, default=None, help='Cubic centered at (c, ..., c) (default: the origin).')
@click.option('--cells-per-period', type=int, default=None,
              help='Box nodes per period M; h = eps / M (default 16).')
@click.option('--nodes', type=click.Choice(['own', 'common'], case_sensitive=False), default=None,
              help='Error nodes: each run\'s own grid, or the coarsest common grid.')
@click.option('--workers', type=int, default=None, help='Processes for the eps points.')
@click.option('--summary', default=None, help='With --format csv, also write the JSON summary here.')
@output_options
def rates(config_path, spec, alpha, s, delta, xi, params, dim, tol, threshold, eps, data, center,
          cells_per_period, nodes, workers, summary, output_format, output):
    """eps-sweep of the oscillatory Dirichlet problem with fitted convergence slopes.

    The coefficient is homogenized on the M-point torus grid the box solver
    samples it on.  CSV columns: eps, e0, e1, local_slope_e0, local_slope_e1
    with e0 = max|u_eps - u| and e1 = max|u_eps - u - 2 eps z|.
    """
    config = _run_config(Command.RATES, config_path, alpha, s, delta, xi, params, spec=spec,
                         dim=dim, tol=tol, threshold=threshold, eps=eps, data=data, center=center,
                         cells_per_period=cells_per_period, nodes=nodes, workers=workers,
                         summary=summary, format=output_format, output=output)
    study = run_rate_study(
        config.spec,
        indices=tuple(index - 1 for index in config.data),
        eps_reciprocals=config.eps,
        cells_per_period=config.cells_per_period,
        tol=config.tol,
        nodes=config.nodes,
        center=config.center,
        workers=config.workers,
        threshold=config.threshold,
    )
    emit(config, study, study.csv_header(), study.csv_rows())


@cli.command()
@config_option
@click.option('--a1', default=None, help='a1(y1, y2) > 0 (default 1).')
@click.option('--a2', default=None, help='a2(y1, y2) > 0 (default 1+0.5*sin(2*pi*(y1+y2))).')
@click.option('--s-values', default=None, help='Increasing s >= 1, e.g. 10,100,1000.')
@click.option('--N', 'resolution', type=int, default=None, help='Torus grid nodes per axis.')
@click.option('--tol', type=float, default=None, help='Residual tolerance of the measure solves.')
@output_options
def asymptotics(config_path, a1, a2, s_values, resolution, tol, output_format, output):
    """L2 distance of the invariant measure of diag(a1, s a2) to its s -> infinity limit.

    CSV columns: s, l2_distance.
    """
    config = _run_config(Command.ASYMPTOTICS, config_path, a1=a1, a2=a2, s_values=s_values,
                         N=resolution, tol=tol, format=output_format, output=output)
    study = run_asymptotic_study(config.a1, config.a2, config.s_values, resolution=config.N,
                                 tol=config.tol)
    emit(config, study, study.csv_header(), study.csv_rows())


@cli.command()
@config_option
@spec_options
@grid_options
@click.option('--list', 'list_families', is_flag=True, help='List the families and their defaults.')
@output_options
def gallery(config_path, spec, alpha, s, delta, xi, params, dim, resolution, tol, list_families,
            output_format, output):
    """Realize a coefficient family on the grid (constructions with their side data).

    CSV columns: y1..yn, a11, a12, ..., ann.
    """
    config = _run_config(Command.GALLERY, config_path, alpha, s, delta, xi, params, spec=spec,
                         dim=dim, N=resolution, tol=tol, format=output_format, output=output,
                         validate=not list_families)
    if list_families:
        aliases = {variant: name for name, variant in ALIASES.items()}
        families = [
            {'variant': variant.value, 'alias': aliases.get(variant),
             'defaults': default_params(variant, config.dim)}
            for variant in Variant
        ]
        emit(config, {'dim': config.dim, 'families': families})
        return

    grid = PeriodicGrid(config.dim, config.N)
    construction, coefficient = _construction(config.spec, grid, config.tol)
    payload: Dict[str, Any] = {
        'spec': config.spec,
        'grid': {'dim': grid.dim, 'N': grid.resolution},
        'min_eigenvalue': coefficient.min_eigenvalue(),
        'sup_norm': coefficient.sup_norm(),
        'entries': {f"a{i + 1}{j + 1}": {'min': entry.min(), 'max': entry.max()}
                    for (i, j), entry in coefficient.items()},
    }
    if construction is not None:
        payload['construction'] = construction
    if config.spec.variant is Variant.THM16_PERTURBED:
        payload['distance_to_base'] = coefficient.distance(realize(config.spec.base_spec(), grid))

    header, rows = _grid_table(grid, _coefficient_columns(coefficient))
    emit(config, payload, header, rows)
