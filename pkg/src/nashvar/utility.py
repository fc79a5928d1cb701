"""CRRA utility ``ln x`` (gamma = 1) or ``x**(1 - gamma) / (1 - gamma)``."""

import math

import numpy as np


def crra(x, gamma: float):
    if gamma == 1.0:
        return np.log(x)
    return np.power(x, 1.0 - gamma) / (1.0 - gamma)


def marginal(x, gamma: float):
    """``U'(x) = x**(-gamma)``."""
    return np.power(x, -gamma)


def inverse_marginal(y, gamma: float):
    """``I = (U')^{-1}``, ``I(y) = y**(-1/gamma)``."""
    return np.power(y, -1.0 / gamma)


def certainty_equivalent(expected_utility: float, gamma: float) -> float:
    """Wealth whose utility equals ``expected_utility``."""
    if gamma == 1.0:
        return math.exp(expected_utility)
    base = (1.0 - gamma) * expected_utility
    if base <= 0:
        return 0.0
    return base ** (1.0 / (1.0 - gamma))
