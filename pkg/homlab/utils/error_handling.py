"""Error hierarchy for HomLab with categories, severities and CLI exit codes"""
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from functools import wraps
from typing import Any, Dict, Optional

import numpy as np

from homlab.utils.enhanced_logging import get_logger


class ErrorSeverity(Enum):
    """Error severity levels"""
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


class ErrorCategory(Enum):
    """Error categories for classification"""
    VALIDATION = "validation"
    CONFIGURATION = "configuration"
    INPUT_OUTPUT = "input_output"
    NUMERICAL = "numerical"
    UNKNOWN = "unknown"


# validation problems are the caller's to fix; numerical ones need a finer grid
# or different parameters
EXIT_CODES = {
    ErrorCategory.VALIDATION: 1,
    ErrorCategory.CONFIGURATION: 1,
    ErrorCategory.INPUT_OUTPUT: 1,
    ErrorCategory.NUMERICAL: 2,
    ErrorCategory.UNKNOWN: 2,
}


@dataclass
class ErrorContext:
    """Context information for errors"""
    operation: str
    category: ErrorCategory
    severity: ErrorSeverity
    additional_data: Dict[str, Any] = field(default_factory=dict)


class HomlabError(Exception):
    """Base exception class for HomLab"""

    def __init__(
        self,
        message: str,
        category: ErrorCategory = ErrorCategory.UNKNOWN,
        severity: ErrorSeverity = ErrorSeverity.MEDIUM,
        recoverable: bool = True,
        context: Optional[ErrorContext] = None,
        original_exception: Optional[Exception] = None,
        **details
    ):
        super().__init__(message)
        self.message = message
        self.category = category
        self.severity = severity
        self.recoverable = recoverable
        self.context = context
        self.original_exception = original_exception
        self.details = details

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.category]

    def to_dict(self) -> Dict[str, Any]:
        """Convert error to dictionary for diagnostics output"""
        return {
            'error': {
                'type': type(self).__name__,
                'message': self.message,
                'category': self.category.value,
                'severity': self.severity.value,
                'recoverable': self.recoverable,
                'details': self.details,
                'context': {
                    'operation': self.context.operation,
                    'data': self.context.additional_data,
                } if self.context else None
            }
        }


class ValidationError(HomlabError):
    """Invalid user input or parameters"""
    def __init__(self, message: str, field: Optional[str] = None, **kwargs):
        kwargs.setdefault('severity', ErrorSeverity.LOW)
        if field is not None:
            kwargs['field'] = field
        super().__init__(message, category=ErrorCategory.VALIDATION, **kwargs)
        self.field = field


class ConfigurationError(HomlabError):
    """Unreadable or inconsistent run configuration"""
    def __init__(self, message: str, **kwargs):
        super().__init__(message, category=ErrorCategory.CONFIGURATION, **kwargs)


class ExpressionSyntaxError(ValidationError):
    """Coefficient expression does not parse"""
    def __init__(self, message: str, position: int, source: str = '', **kwargs):
        super().__init__(message, position=position, source=source, **kwargs)
        self.position = position


class UnknownIdentifierError(ValidationError):
    """Expression names a variable or function that is not available"""
    def __init__(self, name: str, position: int, allowed=(), **kwargs):
        message = f"Unknown identifier '{name}' at position {position}"
        if allowed:
            message += f" (allowed: {', '.join(sorted(allowed))})"
        super().__init__(message, name=name, position=position, **kwargs)
        self.name = name
        self.position = position


class DivisibilityError(ValidationError):
    """Box mesh and period do not nest"""


class DegenerateFitError(ValidationError):
    """Too few points for a slope fit"""


class NumericalError(HomlabError):
    """Numerical failure; refine the grid or change parameters"""
    def __init__(self, message: str, **kwargs):
        kwargs.setdefault('severity', ErrorSeverity.HIGH)
        super().__init__(message, category=ErrorCategory.NUMERICAL, **kwargs)


class ConvergenceError(NumericalError):
    """Residual stayed above tolerance after the allowed refinement steps"""


class PositivityError(NumericalError):
    """Invariant measure has nonpositive entries"""


class CompatibilityError(NumericalError):
    """Right side of a singular periodic problem is not r-orthogonal"""


class SPDViolationError(NumericalError):
    """Coefficient field is not positive definite on the grid"""
    def __init__(self, message: str, min_eigenvalue: float, **kwargs):
        super().__init__(message, min_eigenvalue=min_eigenvalue, **kwargs)
        self.min_eigenvalue = min_eigenvalue


class SmallnessError(NumericalError):
    """Perturbation parameter larger than the construction admits"""
    def __init__(self, message: str, parameter: str, value: float, max_admissible: float, **kwargs):
        super().__init__(message, parameter=parameter, value=value,
                         max_admissible=max_admissible, **kwargs)
        self.parameter = parameter
        self.value = value
        self.max_admissible = max_admissible


class DegenerateConstructionError(NumericalError):
    """Construction input violates its nondegeneracy condition"""


class ExpressionDomainError(NumericalError):
    """Expression leaves its domain on the sampled grid"""


@contextmanager
def error_context(
    operation: str,
    category: ErrorCategory = ErrorCategory.UNKNOWN,
    severity: ErrorSeverity = ErrorSeverity.MEDIUM,
    **additional_data
):
    """Attach operation context to errors raised inside the block"""
    context = ErrorContext(
        operation=operation,
        category=category,
        severity=severity,
        additional_data=additional_data
    )

    try:
        yield context
    except HomlabError as e:
        if e.context is None:
            e.context = context
        raise
    except Exception as e:
        raise HomlabError(
            str(e),
            category=category,
            severity=severity,
            context=context,
            original_exception=e
        ) from e


def handle_linalg_errors(func):
    """Decorator turning sparse/dense factorization failures into NumericalError"""
    logger = get_logger(func.__module__)

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except HomlabError:
            raise
        except (np.linalg.LinAlgError, RuntimeError, FloatingPointError) as e:
            logger.error(f"Linear algebra failure in {func.__name__}: {e}",
                         category='numerics', error_type=type(e).__name__)
            raise NumericalError(
                f"Linear algebra failure in {func.__name__}: {e}",
                recoverable=False,
                original_exception=e
            ) from e

    return wrapper
