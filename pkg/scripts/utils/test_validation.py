#!/usr/bin/env python3
"""
Tests for validation utilities.
"""

import sys
from pathlib import Path
import tempfile

import numpy as np

# Add scripts directory to path so utils can be imported as a package
sys.path.insert(0, str(Path(__file__).parent.parent))

from utils.validation import (
    ConfigError,
    NumericalError,
    UsageError,
    ValidationError,
    validate_choice,
    validate_divisible,
    validate_file_exists,
    validate_finite,
    validate_positive_int,
    validate_range,
    validate_shape,
)


def test_error_hierarchy():
    """Config and usage errors share the exit-code-2 base class; numerical errors do not."""
    assert issubclass(ConfigError, ValidationError)
    assert issubclass(UsageError, ValidationError)
    assert not issubclass(NumericalError, ValidationError)
    print("✓ Error hierarchy")


def test_validate_positive_int():
    """Test positive integer validation."""
    validate_positive_int(1, "run.steps")
    validate_positive_int(np.int64(16), "seq.F")
    print("✓ Valid integers accepted")

    for bad in (0, -3):
        try:
            validate_positive_int(bad, "run.steps")
            assert False, f"Should have raised ConfigError for {bad}"
        except ConfigError as e:
            assert "run.steps must be >= 1" in str(e)
    print("✓ Detected non-positive values")

    for bad in (2.0, True, "4"):
        try:
            validate_positive_int(bad, "seq.F")
            assert False, f"Should have raised ConfigError for {bad!r}"
        except ConfigError as e:
            assert "must be an integer" in str(e)
    print("✓ Detected non-integer values")


def test_validate_range():
    """Test numeric range validation."""
    validate_range(0.0, "mask.p_m", 0.0, 1.0)
    validate_range(1.0, "mask.p_m", 0.0, 1.0)
    validate_range(0.0, "encoder.ema_momentum", 0.0, 1.0, high_inclusive=False)
    print("✓ Boundary values accepted")

    try:
        validate_range(1.5, "mask.p_m", 0.0, 1.0)
        assert False, "Should have raised ConfigError above range"
    except ConfigError as e:
        assert str(e) == "mask.p_m must be <= 1.0, got 1.5"
        print("✓ Detected value above range")

    try:
        validate_range(1.0, "encoder.ema_momentum", 0.0, 1.0, high_inclusive=False)
        assert False, "Should have raised ConfigError at exclusive bound"
    except ConfigError as e:
        assert "must be < 1.0" in str(e)
        print("✓ Detected exclusive upper bound")

    try:
        validate_range(-0.1, "loss.tau0", 0.0)
        assert False, "Should have raised ConfigError below range"
    except ConfigError as e:
        assert "must be >= 0.0" in str(e)
        print("✓ Detected value below range")


def test_validate_divisible():
    """Test cube divisibility validation names the axis."""
    validate_divisible('F', 16, 4, 'f')
    validate_divisible('H', 84, 7, 'h')
    print("✓ Divisible axes accepted")

    try:
        validate_divisible('F', 6, 4, 'f')
        assert False, "Should have raised ConfigError for F=6, f=4"
    except ConfigError as e:
        assert str(e) == "axis F: F=6 is not divisible by cube f=4"
        print("✓ Detected non-divisible axis")

    try:
        validate_divisible('W', 28, 0, 'w')
        assert False, "Should have raised ConfigError for zero extent"
    except ConfigError as e:
        assert "axis W" in str(e)
        print("✓ Detected zero cube extent")


def test_validate_shape():
    """Test shape pattern validation."""
    validate_shape((2, 8, 1, 28, 28), (None, 8, 1, 28, 28), "frames")
    print("✓ Matching shape accepted")

    try:
        validate_shape((2, 8, 3, 28, 28), (None, 8, 1, 28, 28), "frames")
        assert False, "Should have raised UsageError for channel mismatch"
    except UsageError as e:
        assert "expected shape ('*', 8, 1, 28, 28)" in str(e)
        print("✓ Detected extent mismatch")

    try:
        validate_shape((8, 28, 28), (None, 8, 1, 28, 28), "frames", error=ConfigError)
        assert False, "Should have raised ConfigError for rank mismatch"
    except ConfigError:
        print("✓ Detected rank mismatch with custom error class")


def test_validate_finite():
    """Test finite value validation names the producer."""
    validate_finite(np.zeros((3, 3)), "query_encoder")
    print("✓ Finite array accepted")

    values = np.array([1.0, np.nan, np.inf, 2.0])
    try:
        validate_finite(values, "decoder")
        assert False, "Should have raised NumericalError"
    except NumericalError as e:
        assert "produced by decoder" in str(e)
        assert "2 of 4" in str(e)
        print("✓ Detected NaN and Inf")


def test_validate_choice():
    """Test option validation."""
    validate_choice('random_walk', 'mask.mode', {'random_walk', 'uniform_cube'})
    print("✓ Valid choice accepted")

    try:
        validate_choice('tube', 'mask.mode', {'random_walk', 'uniform_cube'})
        assert False, "Should have raised ConfigError for unknown mode"
    except ConfigError as e:
        assert "random_walk, uniform_cube" in str(e)
        print("✓ Detected invalid choice")


def test_validate_file_exists():
    """Test file existence validation."""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "run.cfg"
        try:
            validate_file_exists(path, "Config file")
            assert False, "Should have raised UsageError for missing file"
        except UsageError as e:
            assert "Config file not found" in str(e)
            print("✓ Detected missing file")

        path.write_text("")
        try:
            validate_file_exists(path, "Config file")
            assert False, "Should have raised UsageError for empty file"
        except UsageError as e:
            assert "is empty" in str(e)
            print("✓ Detected empty file")

        path.write_text("seq.F = 8\n")
        validate_file_exists(path, "Config file")
        print("✓ Non-empty file accepted")


if __name__ == "__main__":
    print("Running validation tests...\n")

    test_error_hierarchy()
    print()
    test_validate_positive_int()
    print()
    test_validate_range()
    print()
    test_validate_divisible()
    print()
    test_validate_shape()
    print()
    test_validate_finite()
    print()
    test_validate_choice()
    print()
    test_validate_file_exists()

    print("\n✓ All validation tests passed!")
