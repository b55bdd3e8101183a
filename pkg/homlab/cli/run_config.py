"""
Run configuration for the command line

A RunConfig is assembled from an optional ``--config`` file (YAML or JSON)
and the command-line flags, flags winning.  It is validated before any solve
starts and embedded, fully resolved, in every result document.
"""
import os
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Sequence

import yaml

from homlab import resolve_setting
from homlab.gallery.constructions import DEFAULT_A1, DEFAULT_A2
from homlab.gallery.specs import CoefficientSpec
from homlab.models import Command, NodeSet, OutputFormat
from homlab.utils.error_handling import ConfigurationError, DivisibilityError, ValidationError
from homlab.utils.validation import (
    ChoiceRule,
    FloatRule,
    IntegerRule,
    PathRule,
    ReciprocalLadderRule,
    validate_fields,
)

# keys a --config file may set; anything else is a typo worth reporting
CONFIG_KEYS = frozenset({
    'command', 'spec', 'dim', 'N', 'tol', 'threshold', 'params',
    'pair', 'eps', 'cells_per_period', 'data', 'center', 'nodes', 'workers',
    'a1', 'a2', 's_values', 'format', 'output', 'summary',
})


def load_config_file(path: str) -> Dict[str, Any]:
    """Mapping from a YAML or JSON file (JSON is read as YAML)."""
    try:
        with open(path, 'r', encoding='utf-8') as stream:
            data = yaml.safe_load(stream)
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path}: {e.strerror}", path=path) from e
    except yaml.YAMLError as e:
        raise ConfigurationError(f"config file {path} is not valid YAML/JSON: {e}", path=path) from e

    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"config file {path} must hold a mapping at the top level", path=path)
    unknown = sorted(set(data) - CONFIG_KEYS)
    if unknown:
        raise ConfigurationError(
            f"config file {path} has unknown keys {unknown} (allowed: {sorted(CONFIG_KEYS)})",
            path=path,
        )
    return dict(data)


def parse_spec_source(source: Any, dim: Optional[int] = None) -> CoefficientSpec:
    """Family name or alias, inline JSON/YAML mapping, or a path to a spec file."""
    if isinstance(source, CoefficientSpec):
        spec = source
    elif isinstance(source, Mapping):
        spec = CoefficientSpec.from_dict(source)
    elif isinstance(source, str) and source.lstrip().startswith('{'):
        try:
            data = yaml.safe_load(source)
        except yaml.YAMLError as e:
            raise ValidationError(f"inline spec is not valid JSON: {e}", field='spec') from e
        spec = CoefficientSpec.from_dict(data)
    elif isinstance(source, str) and os.path.isfile(source):
        spec = CoefficientSpec.from_dict(load_spec_file(source))
    elif isinstance(source, str):
        spec = CoefficientSpec.named(source, dim or 2)
        dim = None
    else:
        raise ValidationError(f"cannot read a coefficient spec from {source!r}", field='spec')

    if dim is not None and dim != spec.dim:
        spec = CoefficientSpec(spec.variant, dim, _explicit_params(spec))
    return spec


def load_spec_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as stream:
            return yaml.safe_load(stream)
    except OSError as e:
        raise ConfigurationError(f"cannot read spec file {path}: {e.strerror}", path=path) from e
    except yaml.YAMLError as e:
        raise ValidationError(f"spec file {path} is not valid YAML/JSON: {e}", field='spec') from e


def _explicit_params(spec: CoefficientSpec) -> Dict[str, Any]:
    # dimension-dependent defaults are rebuilt for the new dim
    return {key: value for key, value in spec.params.items()
            if key not in ('entries', 'center', 'base')}


def with_params(spec: CoefficientSpec, overrides: Mapping[str, Any]) -> CoefficientSpec:
    overrides = {key: value for key, value in overrides.items() if value is not None}
    if not overrides:
        return spec
    params = dict(spec.params)
    params.update(overrides)
    return CoefficientSpec(spec.variant, spec.dim, params)


def parse_param_pairs(pairs: Sequence[str]) -> Dict[str, Any]:
    """``key=value`` strings; values are read as YAML scalars or lists."""
    params: Dict[str, Any] = {}
    for pair in pairs:
        key, sep, raw = pair.partition('=')
        if not sep or not key.strip():
            raise ValidationError(f"--param expects key=value, got '{pair}'", field='params')
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            value = raw
        params[key.strip()] = raw if value is None else value
    return params


def parse_eps_list(value: Any) -> List[int]:
    """Reciprocals P of eps = 1/P from '4,8,16', '1/4,1/8', '0.25,0.125' or a list."""
    if isinstance(value, str):
        items: Sequence[Any] = [item for item in value.split(',') if item.strip()]
    elif isinstance(value, (list, tuple)):
        items = value
    else:
        raise ValidationError(f"eps must be a comma-separated list, got {value!r}", field='eps')

    reciprocals = []
    for item in items:
        text = str(item).strip()
        try:
            number = Fraction(text) if '/' in text else Fraction(float(text)).limit_denominator(10 ** 6)
        except (ValueError, ZeroDivisionError, OverflowError):
            raise ValidationError(f"cannot read eps entry '{text}'", field='eps') from None
        if number <= 0:
            raise ValidationError(f"eps entry '{text}' must be positive", field='eps')
        # a bare integer P >= 1 means eps = 1/P
        reciprocal = 1 / number if number < 1 or '/' in text else number
        if reciprocal.denominator != 1:
            raise DivisibilityError(
                f"eps = {text} is not the reciprocal of an integer; the box must hold whole periods, "
                f"use e.g. 1/{max(1, round(float(reciprocal)))}",
                field='eps',
            )
        reciprocals.append(int(reciprocal))
    return reciprocals


def parse_float_list(value: Any, name: str) -> List[float]:
    items = value.split(',') if isinstance(value, str) else value
    try:
        return [float(item) for item in items if str(item).strip()]
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a comma-separated list of numbers", field=name) from None


def parse_index_list(value: Any, name: str) -> List[int]:
    """1-based indices from '1,2' or a list."""
    items = value.split(',') if isinstance(value, str) else value
    try:
        return [int(item) for item in items if str(item).strip()]
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be comma-separated integers", field=name) from None


def parse_data(value: Any) -> List[int]:
    """``cubic:j,k,l`` (1-based) to the index triple."""
    if isinstance(value, Mapping):
        kind, indices = value.get('kind', 'cubic'), value.get('indices')
    elif isinstance(value, (list, tuple)):
        kind, indices = 'cubic', value
    else:
        kind, sep, indices = str(value).partition(':')
        if not sep:
            raise ValidationError(f"--data expects cubic:j,k,l, got '{value}'", field='data')
    if str(kind).strip() != 'cubic':
        raise ValidationError(f"only cubic manufactured data is available, got '{kind}'", field='data')
    triple = parse_index_list(indices, 'data')
    if len(triple) != 3:
        raise ValidationError(f"cubic data needs three indices j,k,l, got {triple}", field='data')
    return triple


def _choice(enum_class, value: Any, name: str):
    try:
        return enum_class(str(getattr(value, 'value', value)).lower())
    except ValueError:
        choices = ', '.join(member.value for member in enum_class)
        raise ValidationError(f"{name} must be one of: {choices}", field=name) from None


@dataclass
class RunConfig:
    """Everything one invocation needs; indices are 1-based as on the command line."""

    command: Command
    spec: Optional[CoefficientSpec] = None
    dim: int = 2
    N: Optional[int] = None
    tol: Optional[float] = None
    threshold: Optional[float] = None
    pair: List[int] = field(default_factory=lambda: [1, 1])
    eps: Optional[List[int]] = None
    cells_per_period: Optional[int] = None
    data: List[int] = field(default_factory=lambda: [1, 1, 1])
    center: Optional[float] = None
    nodes: NodeSet = NodeSet.OWN
    workers: Optional[int] = None
    a1: str = DEFAULT_A1
    a2: str = DEFAULT_A2
    s_values: List[float] = field(default_factory=lambda: [10.0, 100.0, 1000.0])
    format: OutputFormat = OutputFormat.JSON
    output: Optional[str] = None
    summary: Optional[str] = None

    @classmethod
    def build(cls, command: Command, config_path: Optional[str] = None,
              **flags: Any) -> 'RunConfig':
        """Config-file values overlaid with the flags that were given."""
        values: Dict[str, Any] = load_config_file(config_path) if config_path else {}
        file_command = values.pop('command', None)
        if file_command is not None and file_command != command.value:
            raise ConfigurationError(
                f"config file is for '{file_command}' but the command is '{command.value}'",
                path=config_path,
            )
        overrides = flags.pop('param_overrides', {}) or {}
        params = dict(values.pop('params', None) or {})
        values.update({key: value for key, value in flags.items() if value is not None})
        params.update({key: value for key, value in overrides.items() if value is not None})
        return cls.from_values(command, values, params)

    @classmethod
    def from_values(cls, command: Command, values: Mapping[str, Any],
                    params: Optional[Mapping[str, Any]] = None) -> 'RunConfig':
        config = cls(command)
        dim = values.get('dim')
        if dim is not None:
            try:
                config.dim = int(dim)
            except (TypeError, ValueError):
                raise ValidationError(f"dim must be an integer, got {dim!r}", field='dim') from None

        if values.get('spec') is not None:
            spec = parse_spec_source(values['spec'], config.dim if dim is not None else None)
            config.spec = with_params(spec, params or {})
            config.dim = config.spec.dim
        elif params:
            raise ValidationError("construction parameters need a --spec", field='params')

        for name in ('N', 'cells_per_period', 'workers'):
            if values.get(name) is not None:
                config_value = values[name]
                try:
                    setattr(config, name, int(config_value))
                except (TypeError, ValueError):
                    raise ValidationError(f"{name} must be an integer, got {config_value!r}",
                                          field=name) from None
        for name in ('tol', 'threshold', 'center'):
            if values.get(name) is not None:
                try:
                    setattr(config, name, float(values[name]))
                except (TypeError, ValueError):
                    raise ValidationError(f"{name} must be a number, got {values[name]!r}",
                                          field=name) from None
        if values.get('pair') is not None:
            config.pair = parse_index_list(values['pair'], 'pair')
        if values.get('eps') is not None:
            config.eps = parse_eps_list(values['eps'])
        if values.get('data') is not None:
            config.data = parse_data(values['data'])
        if values.get('s_values') is not None:
            config.s_values = parse_float_list(values['s_values'], 's_values')
        for name in ('a1', 'a2', 'output', 'summary'):
            if values.get(name) is not None:
                setattr(config, name, str(values[name]))
        if values.get('nodes') is not None:
            config.nodes = _choice(NodeSet, values['nodes'], 'nodes')
        if values.get('format') is not None:
            config.format = _choice(OutputFormat, values['format'], 'format')
        return config.resolved()

    def resolved(self) -> 'RunConfig':
        """Settings-backed defaults filled in, so the embedded copy is complete."""
        return replace(
            self,
            N=resolve_setting('HOMLAB_GRID_N', self.N),
            tol=resolve_setting('HOMLAB_SOLVER_TOL', self.tol),
            threshold=resolve_setting('HOMLAB_CLASSIFY_THRESHOLD', self.threshold),
            eps=list(resolve_setting('HOMLAB_EPS_LADDER', self.eps)),
            cells_per_period=resolve_setting('HOMLAB_CELLS_PER_PERIOD', self.cells_per_period),
            workers=resolve_setting('HOMLAB_RATE_WORKERS', self.workers),
        )

    def validate(self) -> 'RunConfig':
        """Raise ValidationError listing every bad field; divisibility gets its own message."""
        data = asdict(self)
        rules = [
            ChoiceRule('dim', [1, 2, 3]),
            IntegerRule('N', min_value=4, even=True),
            FloatRule('tol'),
            FloatRule('threshold'),
        ]
        if self.output is not None:
            rules.append(PathRule('output'))
        if self.summary is not None:
            rules.append(PathRule('summary'))

        if self.command in (Command.CLASSIFY, Command.EFFECTIVE, Command.CELL,
                            Command.RATES, Command.GALLERY) and self.spec is None:
            raise ValidationError(f"{self.command.value} needs --spec", field='spec')
        if self.command is Command.CELL:
            if len(self.pair) != 2 or not all(1 <= index <= self.dim for index in self.pair):
                raise ValidationError(
                    f"--pair needs two indices in 1..{self.dim}, got {self.pair}", field='pair'
                )
        if self.command is Command.RATES:
            rules += [
                ReciprocalLadderRule('eps', min_length=3),
                IntegerRule('cells_per_period', min_value=4, even=True),
                IntegerRule('workers', min_value=1),
            ]
            if not all(1 <= index <= self.dim for index in self.data):
                raise ValidationError(
                    f"cubic data indices must lie in 1..{self.dim}, got {self.data}", field='data'
                )
        if self.command is Command.ASYMPTOTICS:
            rules.append(ReciprocalLadderRule('s_values', min_length=3, integer=False))

        validate_fields(data, rules)

        if self.command is Command.ASYMPTOTICS and min(self.s_values) < 1.0:
            raise ValidationError("--s-values must all be >= 1", field='s_values')
        if self.command is Command.RATES:
            self._check_box_size()
        return self

    def _check_box_size(self) -> None:
        cap = resolve_setting('HOMLAB_MAX_BOX_UNKNOWNS')
        for reciprocal in self.eps:
            unknowns = (reciprocal * self.cells_per_period - 1) ** self.dim
            if unknowns > cap:
                raise DivisibilityError(
                    f"eps = 1/{reciprocal} with {self.cells_per_period} cells per period needs "
                    f"{unknowns} box unknowns (cap {cap}); drop 1/{reciprocal} from --eps, "
                    f"lower --cells-per-period or raise HOMLAB_MAX_BOX_UNKNOWNS",
                    field='eps',
                )

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'command': self.command.value,
            'spec': self.spec.to_dict() if self.spec else None,
            'dim': self.dim,
            'tol': self.tol,
            'format': self.format.value,
            'output': self.output,
        }
        if self.command is Command.RATES:
            data.update(eps=self.eps, cells_per_period=self.cells_per_period, data=self.data,
                        center=self.center, nodes=self.nodes.value, workers=self.workers,
                        threshold=self.threshold, summary=self.summary)
        elif self.command is Command.ASYMPTOTICS:
            data.update(N=self.N, a1=self.a1, a2=self.a2, s_values=self.s_values)
        else:
            data.update(N=self.N, threshold=self.threshold)
            if self.command is Command.CELL:
                data['pair'] = self.pair
        return data
