"""Tests for the coefficient expression language"""
import numpy as np
import pytest

from homlab.gallery.expression import parse_expression
from homlab.utils.error_handling import (
    ExpressionDomainError,
    ExpressionSyntaxError,
    UnknownIdentifierError,
)


class TestParsing:
    """Test grammar and precedence"""

    @pytest.mark.parametrize('source, expected', [
        ('1+2*3', 7.0),
        ('(1+2)*3', 9.0),
        ('2^3^2', 64.0),
        ('-2^2', -4.0),
        ('2^(-1)', 0.5),
        ('8/4/2', 1.0),
        ('1-2-3', -4.0),
        ('--3', 3.0),
        ('2*pi', 2 * np.pi),
        ('exp(log(5))', 5.0),
        ('sqrt(16)+abs(-2)', 6.0),
        ('1.5e1', 15.0),
        ('.5', 0.5),
    ])
    def test_constant_values(self, source, expected):
        """Test arithmetic on constants"""
        expression = parse_expression(source)
        assert expression.is_constant()
        assert float(expression.evaluate()) == pytest.approx(expected)

    def test_negative_exponent_needs_parentheses(self):
        """Test '^' binds tighter than unary minus"""
        with pytest.raises(ExpressionSyntaxError):
            parse_expression('2^-1')

    @pytest.mark.parametrize('source', ['', '   ', '1+', '(1+2', 'sin', '1 2', 'sin()'])
    def test_syntax_errors(self, source):
        """Test malformed input is a syntax error"""
        with pytest.raises(ExpressionSyntaxError):
            parse_expression(source)

    def test_syntax_error_position(self):
        """Test the reported position points into the source"""
        with pytest.raises(ExpressionSyntaxError) as excinfo:
            parse_expression('1+2*)')
        assert 0 <= excinfo.value.position <= len('1+2*)')

    def test_unknown_variable(self):
        """Test names outside the allowed set are rejected with their position"""
        with pytest.raises(UnknownIdentifierError) as excinfo:
            parse_expression('1+z', variables=['y1', 'y2'])
        assert excinfo.value.name == 'z'
        assert excinfo.value.position == 2

    def test_unknown_function(self):
        with pytest.raises(UnknownIdentifierError) as excinfo:
            parse_expression('tan(y1)')
        assert excinfo.value.name == 'tan'

    def test_variables(self):
        expression = parse_expression('sin(2*pi*(y1+y2))*y1')
        assert expression.variables == frozenset({'y1', 'y2'})


class TestEvaluation:
    """Test evaluation on arrays"""

    def test_broadcasts_over_arrays(self):
        """Test evaluation matches numpy on grid arrays"""
        y1, y2 = np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 7), indexing='ij')
        expression = parse_expression('exp(2*sin(2*pi*(y1+y2)))')
        np.testing.assert_allclose(expression.evaluate({'y1': y1, 'y2': y2}),
                                   np.exp(2 * np.sin(2 * np.pi * (y1 + y2))))

    def test_log_domain(self):
        """Test log of a non-positive sample is a domain error"""
        expression = parse_expression('log(y1)')
        with pytest.raises(ExpressionDomainError):
            expression.evaluate({'y1': np.array([0.0, 0.5])})

    def test_sqrt_domain(self):
        expression = parse_expression('sqrt(y1-0.25)')
        with pytest.raises(ExpressionDomainError):
            expression.evaluate({'y1': np.array([0.0, 0.5])})

    def test_abs_of_periodic_profile(self):
        y1 = np.linspace(0, 1, 9)
        np.testing.assert_allclose(parse_expression('1+abs(sin(2*pi*y1))').evaluate({'y1': y1}),
                                   1 + np.abs(np.sin(2 * np.pi * y1)))

    def test_division_by_zero(self):
        expression = parse_expression('1/y1')
        with pytest.raises(ExpressionDomainError):
            expression.evaluate({'y1': np.array([0.0, 0.5])})

    def test_missing_variable_at_evaluation(self):
        """Test evaluating without a variable names it"""
        with pytest.raises(UnknownIdentifierError):
            parse_expression('y1+y2').evaluate({'y1': 1.0})


class TestPrinting:
    """Test the canonical printer"""

    @pytest.mark.parametrize('source', [
        '1+0.5*sin(2*pi*(y1+y2))',
        '-(y1+y2)^2',
        '(-y1)^2',
        '2^(3^2)',
        '(2^3)^2',
        'y1-(y2-1)',
        'y1/(y2*2)',
        '-y1^2',
    ])
    def test_printed_form_parses_to_the_same_tree(self, source):
        """Test to_source keeps the meaning"""
        expression = parse_expression(source)
        assert parse_expression(expression.to_source()) == expression
