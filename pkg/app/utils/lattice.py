import math
from typing import Sequence, Tuple

import numpy as np

# Absorbs representation error in n*t before flooring (0.29 * 100 = 28.999...).
_GRID_EPS = 1e-9


def sgn(values: np.ndarray) -> np.ndarray:
    """
    Sign with sgn(0) = 0, elementwise.
    """
    return np.sign(values)


def round_half_toward_zero(value: float) -> int:
    """
    Nearest integer to value, with ties resolved toward zero.

    Args:
        value: Any finite real

    Returns:
        int: 0.5 -> 0, 1.5 -> 1, -2.5 -> -2, 0.66 -> 1
    """
    magnitude = math.ceil(abs(value) - 0.5)
    return int(math.copysign(magnitude, value)) if magnitude else 0


def lattice_start(start: Sequence[float], n: int) -> Tuple[Tuple[int, ...], Tuple[float, ...]]:
    """
    Lattice start x^n = round(x * sqrt(n)) and its rescaled value x^n / sqrt(n).

    Args:
        start: Start point x
        n: Lattice resolution (steps per unit time)

    Returns:
        tuple: (lattice start in Z^d, scaled start in R^d)
    """
    root = math.sqrt(n)
    lattice = tuple(round_half_toward_zero(x * root) for x in start)
    scaled = tuple(v / root for v in lattice)
    return lattice, scaled


def step_count(n: int, horizon: float) -> int:
    """K = ceil(n T), the number of chain steps that covers [0, T]."""
    return max(int(math.ceil(n * horizon - _GRID_EPS)), 0)


def grid_index(n: int, t: float) -> int:
    """floor(n t), the lattice index that carries the rescaled value at time t."""
    return int(math.floor(n * t + _GRID_EPS))
