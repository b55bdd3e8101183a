"""
Input validation rules for run configurations
Every CLI and file-driven parameter goes through these before any solve starts
"""
import os
from typing import Any, Dict, List, Optional, Sequence

from homlab.utils.error_handling import ValidationError


class ValidationRule:
    """Base class for validation rules"""

    def __init__(self, field_name: str, required: bool = True):
        self.field_name = field_name
        self.required = required

    def validate(self, value: Any) -> bool:
        """Override in subclasses"""
        return True

    def get_error_message(self) -> str:
        """Override in subclasses"""
        return f"Invalid value for {self.field_name}"


class ChoiceRule(ValidationRule):
    """Choice validation rule - value must be in allowed choices"""

    def __init__(self, field_name: str, choices: Sequence[Any], required: bool = True):
        super().__init__(field_name, required)
        self.choices = list(choices)

    def validate(self, value: Any) -> bool:
        return value in self.choices

    def get_error_message(self) -> str:
        return f"{self.field_name} must be one of: {', '.join(map(str, self.choices))}"


class IntegerRule(ValidationRule):
    """Integer validation rule"""

    def __init__(
        self,
        field_name: str,
        min_value: Optional[int] = None,
        max_value: Optional[int] = None,
        even: bool = False,
        required: bool = True,
    ):
        super().__init__(field_name, required)
        self.min_value = min_value
        self.max_value = max_value
        self.even = even

    def validate(self, value: Any) -> bool:
        if isinstance(value, bool):
            return False
        try:
            int_value = int(value)
        except (ValueError, TypeError):
            return False

        if int_value != value:
            return False

        if self.min_value is not None and int_value < self.min_value:
            return False

        if self.max_value is not None and int_value > self.max_value:
            return False

        if self.even and int_value % 2:
            return False

        return True

    def get_error_message(self) -> str:
        kind = "an even integer" if self.even else "an integer"
        if self.min_value is not None and self.max_value is not None:
            return f"{self.field_name} must be {kind} between {self.min_value} and {self.max_value}"
        elif self.min_value is not None:
            return f"{self.field_name} must be {kind} >= {self.min_value}"
        elif self.max_value is not None:
            return f"{self.field_name} must be {kind} <= {self.max_value}"
        return f"{self.field_name} must be {kind}"


class FloatRule(ValidationRule):
    """Positive (or bounded) real number"""

    def __init__(self, field_name: str, min_value: float = 0.0, inclusive: bool = False,
                 required: bool = True):
        super().__init__(field_name, required)
        self.min_value = min_value
        self.inclusive = inclusive

    def validate(self, value: Any) -> bool:
        if isinstance(value, bool):
            return False
        try:
            float_value = float(value)
        except (ValueError, TypeError):
            return False
        if float_value != float_value:
            return False
        return float_value >= self.min_value if self.inclusive else float_value > self.min_value

    def get_error_message(self) -> str:
        relation = ">=" if self.inclusive else ">"
        return f"{self.field_name} must be a number {relation} {self.min_value}"


class PathRule(ValidationRule):
    """File path validation rule"""

    def __init__(self, field_name: str, required: bool = True, must_exist: bool = False):
        super().__init__(field_name, required)
        self.must_exist = must_exist

    def validate(self, value: Any) -> bool:
        if not isinstance(value, str) or not value or '\x00' in value:
            return False

        if self.must_exist:
            return os.path.exists(value)

        parent = os.path.dirname(os.path.abspath(value))
        return os.path.isdir(parent)

    def get_error_message(self) -> str:
        if self.must_exist:
            return f"{self.field_name} must be a valid existing path"
        return f"{self.field_name} must be a path in an existing directory"


class ReciprocalLadderRule(ValidationRule):
    """Strictly increasing list of positive integers 1/eps (or s values)"""

    def __init__(self, field_name: str, min_length: int = 1, integer: bool = True,
                 required: bool = True):
        super().__init__(field_name, required)
        self.min_length = min_length
        self.integer = integer

    def validate(self, value: Any) -> bool:
        if not isinstance(value, (list, tuple)) or len(value) < self.min_length:
            return False
        rule = IntegerRule(self.field_name, min_value=1) if self.integer else FloatRule(self.field_name)
        if not all(rule.validate(item) for item in value):
            return False
        return all(b > a for a, b in zip(value, value[1:]))

    def get_error_message(self) -> str:
        kind = "positive integers" if self.integer else "positive numbers"
        return (f"{self.field_name} must be a strictly increasing list of at least "
                f"{self.min_length} {kind}")


def validate_fields(data: Dict[str, Any], rules: List[ValidationRule]) -> Dict[str, Any]:
    """
    Check ``data`` against ``rules`` and raise one ValidationError listing every failure
    """
    errors: Dict[str, str] = {}

    for rule in rules:
        value = data.get(rule.field_name)

        if value is None:
            if rule.required:
                errors[rule.field_name] = f"{rule.field_name} is required"
            continue

        if not rule.validate(value):
            errors[rule.field_name] = rule.get_error_message()

    if errors:
        summary = "; ".join(errors[name] for name in sorted(errors))
        raise ValidationError(f"Invalid run configuration: {summary}", errors=errors)

    return data
