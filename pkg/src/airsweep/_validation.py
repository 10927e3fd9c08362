"""Small input-validation helpers shared by the model and estimator layers."""
from __future__ import annotations

import math

import numpy as np


class ConfigurationError(ValueError):
    """Raised when a model is configured with invalid or inconsistent values."""


def check_positive(value, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ConfigurationError(f"{name} must be a finite positive number, got {value!r}")
    return value


def check_nonnegative(value, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise ConfigurationError(f"{name} must be a finite non-negative number, got {value!r}")
    return value


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or int(value) != value or int(value) < 1:
        raise ConfigurationError(f"{name} must be an integer >= 1, got {value!r}")
    return int(value)


def check_in_open_interval(value, lo: float, hi: float, name: str) -> float:
    value = float(value)
    if not (lo < value < hi):
        raise ConfigurationError(f"{name}={value!r} outside the open interval ({lo}, {hi})")
    return value


def check_multiple(length: float, step: float, name: str, rtol: float = 1e-9) -> int:
    """Return ``length / step`` as an int, or raise if it is not (close to) integral."""
    ratio = length / step
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > rtol * max(1.0, ratio):
        raise ConfigurationError(
            f"{name}={length!r} m is not an integer multiple of the cell size {step!r} m"
        )
    return n


def check_point(point, name: str = "point") -> np.ndarray:
    arr = np.asarray(point, dtype=float)
    if arr.shape != (2,) or not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} must be a finite 2D point, got {point!r}")
    return arr
