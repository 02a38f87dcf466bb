#!/usr/bin/env python3
"""
Input validation utilities for the MOOSS pipeline.

This module provides the error classes shared by every stage and small
validation functions that fail fast with messages naming the offending
axis, key or shape.
"""

from typing import Iterable, Optional, Sequence

import numpy as np


class ValidationError(Exception):
    """Base class for rejected input (exit code 2 at the CLI)."""
    pass


class ConfigError(ValidationError):
    """Raised for invalid configuration: bad values, shapes, or divisibility."""
    pass


class UsageError(ValidationError):
    """Raised when an API is called with arguments it cannot accept."""
    pass


class NumericalError(Exception):
    """Raised when an operator or module produces NaN or Inf."""
    pass


def validate_positive_int(value: int, name: str) -> None:
    """
    Validate that a value is an integer >= 1.

    Args:
        value: Value to check
        name: Config key or argument name (for error messages)

    Raises:
        ConfigError: If validation fails
    """
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(
            f"{name} must be an integer, got {type(value).__name__}: {value}"
        )
    if value < 1:
        raise ConfigError(f"{name} must be >= 1, got {value}")


def validate_range(
    value: float,
    name: str,
    low: Optional[float] = None,
    high: Optional[float] = None,
    high_inclusive: bool = True,
) -> None:
    """
    Validate that a numeric value lies in [low, high] (or [low, high)).

    Raises:
        ConfigError: If the value is not numeric or out of range
    """
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
        raise ConfigError(
            f"{name} must be numeric, got {type(value).__name__}: {value}"
        )
    if low is not None and value < low:
        raise ConfigError(f"{name} must be >= {low}, got {value}")
    if high is not None:
        if high_inclusive and value > high:
            raise ConfigError(f"{name} must be <= {high}, got {value}")
        if not high_inclusive and value >= high:
            raise ConfigError(f"{name} must be < {high}, got {value}")


def validate_divisible(axis: str, total: int, part: int, part_name: str) -> None:
    """
    Validate that an axis length is divisible by a cube extent.

    Args:
        axis: Axis name ('F', 'H' or 'W')
        total: Axis length
        part: Cube extent along the axis
        part_name: Cube extent name ('f', 'h' or 'w')

    Raises:
        ConfigError: Naming the offending axis
    """
    if part < 1 or total % part != 0:
        raise ConfigError(
            f"axis {axis}: {axis}={total} is not divisible by cube {part_name}={part}"
        )


def validate_shape(
    actual: Sequence[int],
    expected: Sequence[Optional[int]],
    what: str,
    error: type = UsageError,
) -> None:
    """
    Validate a shape against an expected pattern (None matches any extent).

    Raises:
        UsageError (or the given error class): With both shapes in the message
    """
    actual = tuple(int(a) for a in actual)
    if len(actual) != len(expected) or any(
        e is not None and a != e for a, e in zip(actual, expected)
    ):
        pattern = tuple('*' if e is None else e for e in expected)
        raise error(f"{what}: expected shape {pattern}, got {actual}")


def validate_finite(values: np.ndarray, producer: str) -> None:
    """
    Validate that an array holds only finite values.

    Raises:
        NumericalError: Naming the producing module or operator
    """
    if not np.all(np.isfinite(values)):
        bad = int(np.size(values) - np.count_nonzero(np.isfinite(values)))
        raise NumericalError(
            f"non-finite values produced by {producer} ({bad} of {np.size(values)} entries)"
        )


def validate_choice(value: str, name: str, choices: Iterable[str]) -> None:
    """
    Validate that a string option is one of a fixed set.

    Raises:
        ConfigError: Listing the valid choices
    """
    choices = set(choices)
    if value not in choices:
        raise ConfigError(
            f"Invalid {name} '{value}'. Must be one of: {', '.join(sorted(choices))}"
        )


def validate_file_exists(file_path, description: str = "File") -> None:
    """
    Validate that a file exists and is not empty.

    Raises:
        UsageError: If the file is missing or empty
    """
    from pathlib import Path

    file_path = Path(file_path)
    if not file_path.exists():
        raise UsageError(f"{description} not found: {file_path}")
    if not file_path.is_file():
        raise UsageError(f"{description} is not a file: {file_path}")
    if file_path.stat().st_size == 0:
        raise UsageError(f"{description} is empty: {file_path}")
