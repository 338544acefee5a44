"""Reusable validators for configuration values and operation inputs.

Each validator is a callable that returns the (possibly normalized) value or
raises `django.core.exceptions.ValidationError` keyed by the field name, so
``error.message_dict`` maps the offending field to its messages.

Examples:
    >>> is_positive(0.5, "h")
    0.5
    >>> is_strictly_decreasing([1.0, 0.5], "resolutions")
    [1.0, 0.5]
"""

import math
from typing import Any, Iterable, List, Sequence

from django.core.exceptions import ValidationError

__all__ = [
    "validation_error",
    "is_finite",
    "is_positive",
    "is_non_negative",
    "is_positive_int",
    "is_strictly_decreasing",
    "is_exponent",
    "is_choice",
    "no_unknown_keys",
]


def validation_error(message: str, field: str = "", code: str = "invalid") -> ValidationError:
    """Build a ValidationError for ``field``, or a non-field error when ``field`` is empty."""
    if field:
        return ValidationError({field: ValidationError(message, code=code)})
    return ValidationError(message, code=code)


def is_finite(value: Any, field: str = "") -> float:
    """Validate that a value converts to a finite float."""
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise validation_error(f"expected a number, got {value!r}", field)
    if not math.isfinite(number):
        raise validation_error(f"expected a finite number, got {value!r}", field)
    return number


def is_positive(value: Any, field: str = "") -> float:
    """Validate that a value is a finite number strictly greater than zero."""
    number = is_finite(value, field)
    if number <= 0:
        raise validation_error(f"must be positive, got {number!r}", field)
    return number


def is_non_negative(value: Any, field: str = "") -> float:
    number = is_finite(value, field)
    if number < 0:
        raise validation_error(f"must be non-negative, got {number!r}", field)
    return number


def is_positive_int(value: Any, field: str = "") -> int:
    """Validate that a value is an integer >= 1 (booleans rejected)."""
    if isinstance(value, bool) or not isinstance(value, int):
        raise validation_error(f"expected an integer, got {value!r}", field)
    if value < 1:
        raise validation_error(f"must be at least 1, got {value!r}", field)
    return value


def is_strictly_decreasing(values: Sequence[Any], field: str = "") -> List[float]:
    """Validate a non-empty, strictly decreasing sequence of positive numbers."""
    numbers = [is_positive(v, field) for v in values]
    if not numbers:
        raise validation_error("must not be empty", field)
    for previous, current in zip(numbers, numbers[1:]):
        if current >= previous:
            raise validation_error(f"must be strictly decreasing, got {numbers!r}", field)
    return numbers


def is_exponent(value: Any, field: str = "") -> float:
    """Validate an exponent in [1, inf]; the string ``"inf"`` is accepted."""
    if isinstance(value, str) and value.lower() in {"inf", "infinity"}:
        return math.inf
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise validation_error(f"expected an exponent, got {value!r}", field)
    if math.isnan(number) or number < 1:
        raise validation_error(f"exponent must be >= 1, got {value!r}", field)
    return number


def is_choice(value: Any, choices_cls, field: str = "") -> str:
    """Validate membership in a `variation_lab.choices` class."""
    if not choices_cls.is_valid(value):
        allowed = ", ".join(sorted(choices_cls.get_values()))
        raise validation_error(f"{value!r} is not one of {allowed}", field)
    return choices_cls(value)


def no_unknown_keys(mapping: dict, allowed: Iterable[str], field: str = "") -> dict:
    """Reject keys outside ``allowed`` so typos fail fast."""
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        where = f"{field}." if field else ""
        raise validation_error(f"unknown key(s): {', '.join(where + k for k in unknown)}", field)
    return mapping
