"""Input checks shared by the solvers and the estimator wrappers."""

import math

import numpy as np


def check_positive(name: str, value: float) -> float:
    if not (isinstance(value, (int, float, np.floating, np.integer))
            and math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_unit(name: str, value: float) -> float:
    """Probabilities and weights live in ``[0, 1]``."""
    if not (isinstance(value, (int, float, np.floating, np.integer))
            and 0.0 <= value <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return float(value)


def check_z(z) -> np.ndarray:
    """Validate an array of state-price-density values (all > 0)."""
    z = np.asarray(z, dtype=float)
    if z.ndim > 1:
        z = z.ravel() if min(z.shape) == 1 else z
    if z.ndim != 1:
        raise ValueError("z must be one-dimensional")
    if not np.all(np.isfinite(z)) or np.any(z <= 0):
        raise ValueError("z values must be finite and positive")
    return z
