"""Small input validation helpers shared across modules."""

from __future__ import annotations

import math
from numbers import Integral, Real

import numpy as np


class ConstraintError(ValueError):
    """Raised when a documented precondition or invariant is violated."""


class NumericalAbort(RuntimeError):
    """Raised when a simulation produces non-finite values."""


def check_positive(value, name: str, strict: bool = True) -> float:
    if not isinstance(value, Real) or isinstance(value, bool):
        raise ConstraintError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConstraintError(f"{name} must be finite, got {value}")
    if strict and value <= 0:
        raise ConstraintError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ConstraintError(f"{name} must be >= 0, got {value}")
    return value


def check_nonneg_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise ConstraintError(f"{name} must be an integer, got {value!r}")
    if value < 0:
        raise ConstraintError(f"{name} must be >= 0, got {value}")
    return int(value)


def check_exponent(p, name: str) -> float:
    """Integrability exponent in [1, inf]; ``np.inf`` is the sentinel for infinity."""
    p = float(p)
    if not (p >= 1.0):
        raise ConstraintError(f"{name} must lie in [1, inf], got {p}")
    return p


def check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericalAbort(f"non-finite values in {what}")
    return arr


def check_increasing(t: np.ndarray, name: str = "time grid") -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size < 1:
        raise ConstraintError(f"{name} must be a non-empty 1d array")
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise ConstraintError(f"{name} must be strictly increasing")
    return t
