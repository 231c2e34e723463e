"""
Exact finite-n law of the chain by forward dynamic programming, and the
closed-form reference laws used by the verification suites.
"""
import logging
import math
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate, stats

from app.core.config import settings
from app.core.errors import ErrorCode, SkewSimError
from app.core.fields import VectorField, build_field
from app.models.models import LatticeLaw, ValidatedConfig
from app.services.skew_chain_service import decompose_surface_values, surface_values

logger = logging.getLogger(__name__)


def _law_1d(start: int, steps: int, n: int, field: VectorField) -> Tuple[np.ndarray, np.ndarray]:
    offset = steps - start  # array index of U = 0
    values = np.arange(start - steps, start + steps + 1)
    mass = np.zeros(values.shape[0])
    mass[steps] = 1.0

    p_up = np.full(values.shape[0], 0.5)
    if 0 <= offset < values.shape[0]:
        beta = surface_values(field, np.zeros((1, 0)))
        p_up[offset] = (1.0 + beta[0, 0]) / 2.0

    for _ in range(steps):
        moved = np.zeros_like(mass)
        moved[1:] += p_up[:-1] * mass[:-1]
        moved[:-1] += (1.0 - p_up[1:]) * mass[1:]
        mass = moved

    keep = mass > 0
    return values[keep, None], mass[keep]


def _transverse_reach(field: VectorField) -> int:
    sup = field.sup_norm()
    return 1 + 2 * int(math.floor((sup + 1.0) / 2.0))


def _law_2d(start: Tuple[int, int], steps: int, n: int, field: VectorField) -> Tuple[np.ndarray, np.ndarray]:
    if steps > settings.DP_MAX_STEPS_2D:
        raise SkewSimError(
            ErrorCode.BUDGET_EXCEEDED,
            f"d=2 oracle is capped at {settings.DP_MAX_STEPS_2D} steps, got {steps}",
        )
    reach = _transverse_reach(field)
    u_values = np.arange(start[0] - steps, start[0] + steps + 1)
    y_values = np.arange(start[1] - steps * reach, start[1] + steps * reach + 1)
    cells = u_values.shape[0] * y_values.shape[0]
    if cells > settings.DP_STATE_BUDGET:
        raise SkewSimError(
            ErrorCode.BUDGET_EXCEEDED,
            f"d=2 oracle needs {cells} states, budget is {settings.DP_STATE_BUDGET}",
        )
    logger.debug(f"d=2 oracle grid {u_values.shape[0]} x {y_values.shape[0]} for {steps} steps")

    mass = np.zeros((u_values.shape[0], y_values.shape[0]))
    mass[steps, steps * reach] = 1.0
    surface_row = steps - start[0]
    on_grid = 0 <= surface_row < u_values.shape[0]

    if on_grid:
        beta = surface_values(field, (y_values / math.sqrt(n))[:, None])
        shift, bias = decompose_surface_values(beta)
        p1 = (1.0 + bias[:, 0]) / 2.0
        p2 = (1.0 + bias[:, 1]) / 2.0
        columns = np.arange(y_values.shape[0])
        up_target = columns + shift[:, 1] + 1
        down_target = columns + shift[:, 1] - 1
        valid = (down_target >= 0) & (up_target < y_values.shape[0])

    for _ in range(steps):
        moved = np.zeros_like(mass)
        off = mass.copy()
        if on_grid:
            off[surface_row] = 0.0
        quarter = 0.25 * off
        moved[1:, 1:] += quarter[:-1, :-1]
        moved[1:, :-1] += quarter[:-1, 1:]
        moved[:-1, 1:] += quarter[1:, :-1]
        moved[:-1, :-1] += quarter[1:, 1:]

        if on_grid:
            row = mass[surface_row]
            active = valid & (row > 0)
            if np.any((row > 0) & ~valid):
                raise SkewSimError(ErrorCode.BUDGET_EXCEEDED, "transverse shift left the oracle grid")
            idx = columns[active]
            weight = row[active]
            for du, pu in ((1, p1[active]), (-1, 1.0 - p1[active])):
                if 0 <= surface_row + du < u_values.shape[0]:
                    np.add.at(moved[surface_row + du], up_target[active], weight * pu * p2[idx])
                    np.add.at(moved[surface_row + du], down_target[active], weight * pu * (1.0 - p2[idx]))
        mass = moved

    ui, yi = np.nonzero(mass > 0)
    states = np.stack([u_values[ui], y_values[yi]], axis=1)
    return states, mass[ui, yi]


def exact_chain_law(validated: ValidatedConfig, k: int, field: Optional[VectorField] = None) -> LatticeLaw:
    """
    Exact law of the chain after k steps from the config's lattice start.

    Pushes each state's mass through its exact one-step law.

    Args:
        validated: Validated config, d <= 2
        k: Number of steps
        field: Field override; defaults to the config's field

    Returns:
        LatticeLaw with positive masses only

    Raises:
        SkewSimError: DIMENSION_TOO_LARGE, BUDGET_EXCEEDED
    """
    config = validated.config
    d = config.dimension
    if d > 2:
        raise SkewSimError(ErrorCode.DIMENSION_TOO_LARGE, f"exact oracle supports d <= 2, got d={d}")
    if field is None:
        field = build_field(config.field, d)

    n = config.resolution_n
    if d == 1:
        if 2 * k + 1 > settings.DP_STATE_BUDGET:
            raise SkewSimError(ErrorCode.BUDGET_EXCEEDED, f"d=1 oracle needs {2 * k + 1} states")
        states, mass = _law_1d(validated.lattice_start[0], k, n, field)
    else:
        states, mass = _law_2d(validated.lattice_start, k, n, field)

    logger.info(f"Exact chain law: d={d} n={n} k={k} support={states.shape[0]}")
    return LatticeLaw(states=states, mass=mass, steps=k, resolution=n)


def sign_probability(law: LatticeLaw) -> Tuple[float, float, float]:
    """
    Mass of the law by the sign of coordinate 1.

    Returns:
        tuple: (p_minus, p_zero, p_plus)
    """
    u = law.states[:, 0]
    return (
        float(law.mass[u < 0].sum()),
        float(law.mass[u == 0].sum()),
        float(law.mass[u > 0].sum()),
    )


def skew_bm_reference_cdf(alpha: float, t: float) -> Callable[[np.ndarray], np.ndarray]:
    """
    CDF at time t of skew Brownian motion started at 0.

    Density 2 alpha phi_t(y) for y > 0 and 2 (1 - alpha) phi_t(y) for y < 0.

    Args:
        alpha: Probability of a positive excursion, in [0, 1]
        t: Time, > 0

    Returns:
        Vectorised CDF

    Raises:
        SkewSimError: ALPHA_RANGE, NONPOSITIVE
    """
    if not 0.0 <= alpha <= 1.0:
        raise SkewSimError(ErrorCode.ALPHA_RANGE, f"alpha must lie in [0, 1], got {alpha}")
    if not t > 0:
        raise SkewSimError(ErrorCode.NONPOSITIVE, f"t must be > 0, got {t}")
    scale = math.sqrt(t)

    def cdf(y):
        y = np.asarray(y, dtype=np.float64)
        phi = stats.norm.cdf(y / scale)
        return np.where(y < 0, 2.0 * (1.0 - alpha) * phi, (1.0 - alpha) + alpha * (2.0 * phi - 1.0))

    return cdf


def reflected_local_time_mean(t: float) -> float:
    """
    E[L(t)] of reflected Brownian motion from 0, which equals E|N(0, t)|.

    Integrated numerically; 0 for t <= 0.
    """
    if t <= 0:
        return 0.0
    scale = math.sqrt(t)
    half, _ = integrate.quad(lambda y: y * stats.norm.pdf(y, scale=scale), 0.0, np.inf)
    return 2.0 * half


def law_cdf(law: LatticeLaw, coordinate: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rescaled atoms of one coordinate and the CDF value at each atom.

    Returns:
        tuple: (support, cumulative mass)
    """
    support, masses = law.marginal(coordinate)
    return support, np.cumsum(masses)


def law_sup_distance(law: LatticeLaw, cdf: Callable[[np.ndarray], np.ndarray], coordinate: int = 0) -> float:
    """
    sup_y |F_law(y) - cdf(y)| for a continuous cdf, checking both sides of every atom.
    """
    support, cumulative = law_cdf(law, coordinate)
    reference = cdf(support)
    before = np.concatenate([[0.0], cumulative[:-1]])
    return float(max(np.max(np.abs(cumulative - reference)), np.max(np.abs(before - reference))))
