"""
Diffusion rescaling of lattice runs, the one-dimensional Skorohod map and
local-time estimators on grid paths.
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np

from app.core.errors import ErrorCode, SkewSimError
from app.core.fields import VectorField
from app.models.models import LatticeRun, ReflectedPair, ScaledPath
from app.services.skew_chain_service import compensated_driver, martingale_bound
from app.utils.lattice import sgn

logger = logging.getLogger(__name__)


def rescale(run: LatticeRun, n: int, T: float, field: Optional[VectorField] = None) -> ScaledPath:
    """
    Rescale a lattice run: Xbar(t) = X_{floor(nt)} / sqrt(n), likewise W, L, Z, Z*.

    Args:
        run: Complete lattice run
        n: Lattice resolution the run was produced at
        T: Horizon
        field: When given, the remainder eps^n on the grid is computed as well

    Returns:
        ScaledPath on the grid t_k = k / n, k = 0..K
    """
    root_n = math.sqrt(n)
    remainder = None
    if field is not None:
        remainder = (compensated_driver(run, field) - run.W) / root_n

    return ScaledPath(
        times=np.arange(run.steps + 1) / n,
        X=run.X / root_n,
        W=run.W / root_n,
        L=run.L / root_n,
        Z=run.Z / root_n,
        Zstar=run.Zstar / root_n,
        resolution=n,
        horizon=T,
        remainder=remainder,
    )


def skorohod_map(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    One-dimensional Skorohod map on a grid path.

    h(t) = -inf_{s <= t} (g(s) ^ 0), f = g + h.

    Args:
        g: Real grid path

    Returns:
        tuple: (f >= 0, h nondecreasing)
    """
    g = np.asarray(g, dtype=np.float64)
    h = np.maximum(0.0, -np.minimum.accumulate(g))
    return g + h, h


def reflected_pair(y1: float, B1: np.ndarray) -> ReflectedPair:
    """
    Explicit reflected pair S = y1 + B1 + V >= 0 with minimal regulator V.

    Args:
        y1: Start, must be >= 0
        B1: Driving grid path with B1(0) = 0

    Returns:
        ReflectedPair

    Raises:
        SkewSimError: NEGATIVE_START
    """
    if y1 < 0:
        raise SkewSimError(ErrorCode.NEGATIVE_START, f"reflected pair needs y1 >= 0, got {y1}")
    S, V = skorohod_map(y1 + np.asarray(B1, dtype=np.float64))
    return ReflectedPair(S=S, V=V)


def is_reflected_pair(y1: float, B1: np.ndarray, S: np.ndarray, V: np.ndarray, tol: float = 1e-12) -> bool:
    """
    Whether (S, V) satisfies the four defining conditions on the grid.

    S = y1 + B1 + V, S >= 0, V nondecreasing from 0, and V only increases
    at grid indices where S is 0.
    """
    B1 = np.asarray(B1, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if abs(V[0]) > tol or np.any(S < -tol):
        return False
    if np.max(np.abs(S - (y1 + B1 + V))) > tol:
        return False
    increments = np.diff(V)
    if np.any(increments < -tol):
        return False
    rises = np.flatnonzero(increments > tol) + 1
    return bool(np.all(np.abs(S[rises]) <= tol))


def tanaka_local_time(Z: np.ndarray) -> np.ndarray:
    """
    Symmetric local time at 0 by Tanaka's formula, sgn(0) = 0.

    L(t_k) = |Z(t_k)| - |Z(0)| - sum_{i<k} sgn(Z(t_i)) (Z(t_{i+1}) - Z(t_i))
    """
    Z = np.asarray(Z, dtype=np.float64)
    integral = np.concatenate([[0.0], np.cumsum(sgn(Z[:-1]) * np.diff(Z))])
    return np.abs(Z) - abs(Z[0]) - integral


def occupation_local_time(Z: np.ndarray, eps: float, dt: float) -> np.ndarray:
    """
    Occupation-time estimate of the symmetric local time.

    L_eps(t_k) = (1 / 2 eps) * sum_{i<k} 1{|Z(t_i)| < eps} * dt

    Args:
        Z: Grid path
        eps: Half-width of the window, > 0
        dt: Grid spacing

    Raises:
        SkewSimError: NONPOSITIVE_EPS
    """
    if not eps > 0:
        raise SkewSimError(ErrorCode.NONPOSITIVE_EPS, f"eps must be > 0, got {eps}")
    Z = np.asarray(Z, dtype=np.float64)
    inside = (np.abs(Z[:-1]) < eps).astype(np.float64)
    return np.concatenate([[0.0], np.cumsum(inside)]) * dt / (2.0 * eps)


def _positive_local_time(Z: np.ndarray) -> np.ndarray:
    positive = np.maximum(Z, 0.0)
    integral = np.concatenate([[0.0], np.cumsum((Z[:-1] > 0) * np.diff(Z))])
    return positive - positive[0] - integral


def one_sided_local_times(Z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    One-sided local times at 0; L_plus + L_minus equals tanaka_local_time(Z).

    Returns:
        tuple: (L_plus, L_minus)
    """
    Z = np.asarray(Z, dtype=np.float64)
    return _positive_local_time(Z), _positive_local_time(-Z)


def skorohod_representation(path: ScaledPath) -> ReflectedPair:
    """
    Rebuild |Ubar| as the Skorohod reflection of |xbar_1| + Zbar - (1/sqrt(n)) 1{Ubar = 0}.

    The regulator returned equals Lbar one grid step later (see next_step_local_time).
    """
    on_surface = (path.U == 0).astype(np.float64)
    g = abs(float(path.start[0])) + path.Z - on_surface / math.sqrt(path.resolution)
    S, V = skorohod_map(g)
    return ReflectedPair(S=S, V=V)


def next_step_local_time(path: ScaledPath) -> np.ndarray:
    """Lbar(t_{k+1}) for every grid index k, extending past the last index with 1{U_K = 0}."""
    last = path.L[-1] + float(path.U[-1] == 0) / math.sqrt(path.resolution)
    return np.append(path.L[1:], last)


def remainder_bound(field: VectorField, dimension: int, mean_local_time: float, n: int) -> float:
    """
    Bound on E[max_t |eps^n(t)|^2]: c_2 E[Lbar(t)] / sqrt(n), c_2 = 8 c_1^2.
    """
    c1 = martingale_bound(field, dimension)
    return 8.0 * c1 ** 2 * mean_local_time / math.sqrt(n)


def randomization_bound(mean_local_time: float, n: int) -> float:
    """Bound on E[max_t |Zbar* - Zbar|^2]: 8 E[Lbar(t)] / sqrt(n)."""
    return 8.0 * mean_local_time / math.sqrt(n)
