"""
Coefficient expressions: a small arithmetic language over grid variables

    expr    :: expr ('+' | '-') expr
    term    :: term ('*' | '/') term
    unary   :: '-' unary | power
    power   :: atom ('^' atom)*          left-associative
    atom    :: number | pi | name | fn '(' expr ')' | '(' expr ')'

``^`` binds tighter than unary minus, so ``-y1^2`` is ``-(y1^2)`` and an
exponent starting with a minus sign needs parentheses: ``2^(-1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Union

import numpy as np
import pyparsing as pp

from homlab.utils.error_handling import (
    ExpressionDomainError,
    ExpressionSyntaxError,
    UnknownIdentifierError,
)

pp.ParserElement.enable_packrat()

ArrayLike = Union[np.ndarray, float]

FUNCTIONS = ('sin', 'cos', 'exp', 'log', 'sqrt', 'abs')
CONSTANTS = {'pi': float(np.pi)}
DEFAULT_VARIABLES = frozenset({'y1', 'y2', 'y3', 'x1', 'x2', 'x3', 't'})

# binding strength used by the printer
_PRECEDENCE = {'+': 1, '-': 1, '*': 2, '/': 2, 'neg': 3, '^': 4, 'atom': 5}


class Node:
    precedence = _PRECEDENCE['atom']

    def evaluate(self, env: Mapping[str, ArrayLike]) -> ArrayLike:
        raise NotImplementedError

    def names(self) -> Iterable[str]:
        return ()

    def to_source(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Number(Node):
    value: float

    def evaluate(self, env):
        return self.value

    def to_source(self) -> str:
        if float(self.value).is_integer() and abs(self.value) < 1e15:
            text = str(int(self.value))
        else:
            text = repr(float(self.value))
        return f"({text})" if self.value < 0 else text


@dataclass(frozen=True)
class Constant(Node):
    name: str

    def evaluate(self, env):
        return CONSTANTS[self.name]

    def to_source(self) -> str:
        return self.name


@dataclass(frozen=True)
class Variable(Node):
    name: str
    position: int = field(default=0, compare=False)

    def evaluate(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise UnknownIdentifierError(self.name, self.position, allowed=env.keys()) from None

    def names(self):
        return (self.name,)

    def to_source(self) -> str:
        return self.name


@dataclass(frozen=True)
class UnaryMinus(Node):
    operand: Node
    precedence = _PRECEDENCE['neg']

    def evaluate(self, env):
        return -self.operand.evaluate(env)

    def names(self):
        return self.operand.names()

    def to_source(self) -> str:
        inner = self.operand.to_source()
        if self.operand.precedence <= self.precedence:
            inner = f"({inner})"
        return f"-{inner}"


@dataclass(frozen=True)
class BinaryOp(Node):
    operator: str
    left: Node
    right: Node

    @property
    def precedence(self) -> int:
        return _PRECEDENCE[self.operator]

    def evaluate(self, env):
        left = self.left.evaluate(env)
        right = self.right.evaluate(env)
        with np.errstate(all='ignore'):
            if self.operator == '+':
                return left + right
            if self.operator == '-':
                return left - right
            if self.operator == '*':
                return left * right
            if self.operator == '/':
                if np.any(np.asarray(right) == 0):
                    raise ExpressionDomainError("division by zero on the sampled grid",
                                                expression=self.to_source())
                return left / right
            result = np.power(np.asarray(left, dtype=float), right)
        if not np.all(np.isfinite(result)):
            raise ExpressionDomainError("power is undefined on the sampled grid",
                                        expression=self.to_source())
        return result

    def names(self):
        return (*self.left.names(), *self.right.names())

    def to_source(self) -> str:
        left = self.left.to_source()
        right = self.right.to_source()
        if self.left.precedence < self.precedence:
            left = f"({left})"
        if self.operator == '^':
            # the grammar only accepts an atom as exponent
            if self.right.precedence < _PRECEDENCE['atom']:
                right = f"({right})"
        elif self.right.precedence <= self.precedence:
            right = f"({right})"
        return f"{left}{self.operator}{right}"


@dataclass(frozen=True)
class Call(Node):
    function: str
    argument: Node
    position: int = field(default=0, compare=False)

    def evaluate(self, env):
        value = np.asarray(self.argument.evaluate(env), dtype=float)
        if self.function == 'log':
            if np.any(value <= 0):
                raise ExpressionDomainError("log of a non-positive value on the sampled grid",
                                            expression=self.to_source())
            return np.log(value)
        if self.function == 'sqrt' and np.any(value < 0):
            raise ExpressionDomainError("sqrt of a negative value on the sampled grid",
                                        expression=self.to_source())
        with np.errstate(over='ignore'):
            result = getattr(np, self.function)(value)
        if not np.all(np.isfinite(result)):
            raise ExpressionDomainError(f"{self.function} overflows on the sampled grid",
                                        expression=self.to_source())
        return result

    def names(self):
        return self.argument.names()

    def to_source(self) -> str:
        return f"{self.function}({self.argument.to_source()})"


def _fold_binary(tokens):
    operands = tokens[0]
    node = operands[0]
    for index in range(1, len(operands), 2):
        node = BinaryOp(operands[index], node, operands[index + 1])
    return node


def _fold_unary(tokens):
    operands = list(tokens[0])
    node = operands[-1]
    for _ in operands[:-1]:
        node = UnaryMinus(node)
    return node


def _build_grammar() -> pp.ParserElement:
    expr = pp.Forward()
    number = pp.Regex(r"(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?")
    number.set_parse_action(lambda t: Number(float(t[0])))

    identifier = pp.Regex(r"[A-Za-z_][A-Za-z_0-9]*")
    call = identifier + pp.Suppress('(') - expr + pp.Suppress(')')
    call.set_parse_action(lambda s, loc, t: _make_call(t[0], t[1], loc))

    name = identifier.copy()
    name.set_parse_action(lambda s, loc, t: _make_name(t[0], loc))

    operand = number | call | name
    expr <<= pp.infix_notation(
        operand,
        [
            (pp.Literal('^'), 2, pp.OpAssoc.LEFT, _fold_binary),
            (pp.Literal('-'), 1, pp.OpAssoc.RIGHT, _fold_unary),
            (pp.one_of('* /'), 2, pp.OpAssoc.LEFT, _fold_binary),
            (pp.one_of('+ -'), 2, pp.OpAssoc.LEFT, _fold_binary),
        ],
    )
    return expr


def _make_call(function: str, argument: Node, position: int) -> Call:
    if function not in FUNCTIONS:
        raise UnknownIdentifierError(function, position, allowed=FUNCTIONS)
    return Call(function, argument, position)


def _make_name(name: str, position: int) -> Node:
    if name in CONSTANTS:
        return Constant(name)
    if name in FUNCTIONS:
        raise ExpressionSyntaxError(f"function '{name}' needs an argument", position=position)
    return Variable(name, position)


_GRAMMAR = _build_grammar()


class Expression:
    """Parsed expression; ``evaluate`` broadcasts over array-valued variables."""

    def __init__(self, root: Node, source: str):
        self.root = root
        self.source = source

    @property
    def variables(self) -> FrozenSet[str]:
        return frozenset(self.root.names())

    def is_constant(self) -> bool:
        return not self.variables

    def evaluate(self, env: Optional[Mapping[str, ArrayLike]] = None) -> ArrayLike:
        return self.root.evaluate(env or {})

    def to_source(self) -> str:
        return self.root.to_source()

    def __repr__(self) -> str:
        return f"Expression({self.source!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Expression) and self.root == other.root

    def __hash__(self) -> int:
        return hash(self.root)


def parse_expression(source: str, variables: Optional[Iterable[str]] = None) -> Expression:
    """Parse ``source``; names outside ``variables`` are rejected with their position."""
    if not isinstance(source, str):
        source = str(source)
    allowed = DEFAULT_VARIABLES if variables is None else frozenset(variables)

    if not source.strip():
        raise ExpressionSyntaxError("empty expression", position=0, source=source)

    try:
        root = _GRAMMAR.parse_string(source, parse_all=True)[0]
    except (pp.ParseException, pp.ParseSyntaxException) as e:
        raise ExpressionSyntaxError(
            f"cannot parse expression at position {e.loc}: {source!r}",
            position=e.loc, source=source,
        ) from None

    _check_names(root, allowed)
    return Expression(root, source)


def _check_names(node: Node, allowed: FrozenSet[str]) -> None:
    if isinstance(node, Variable):
        if node.name not in allowed:
            raise UnknownIdentifierError(node.name, node.position, allowed=allowed)
    elif isinstance(node, UnaryMinus):
        _check_names(node.operand, allowed)
    elif isinstance(node, BinaryOp):
        _check_names(node.left, allowed)
        _check_names(node.right, allowed)
    elif isinstance(node, Call):
        _check_names(node.argument, allowed)


def coordinate_names(prefix: str, dim: int) -> Dict[int, str]:
    """{0: 'y1', 1: 'y2', ...} for the given prefix."""
    return {axis: f"{prefix}{axis + 1}" for axis in range(dim)}
