"""
Drift by change of measure: Girsanov weights on zero-drift paths and the
weighted estimators built on them.
"""
import logging
from typing import Callable, Sequence

import numpy as np

from app.core.config import settings
from app.core.errors import ErrorCode, SkewSimError
from app.core.fields import VectorField
from app.models.models import ScaledPath, WeightedEstimate, WeightedSample
from app.utils.lattice import grid_index

logger = logging.getLogger(__name__)

Functional = Callable[[ScaledPath], float]


def _is_zero(drift: VectorField) -> bool:
    return bool(getattr(drift, "is_zero", False))


def log_weight_batch(X: np.ndarray, W: np.ndarray, drift: VectorField, n: int, T: float) -> np.ndarray:
    """
    Discretised log of the exponential martingale for a batch of rescaled paths.

    log E_T = sum_k a(X(t_k)) . dW_k - 1/2 sum_k |a(X(t_k))|^2 / n, k < floor(nT),
    with a evaluated at the left end of every step.

    dW is the coupled walk, not the compensated driver. On hyperplane steps
    the two differ, so reweighted expectations carry a bias of order
    |a| E[L(T)] / sqrt(n) that vanishes as n grows (about 0.13 on E[X(1)]
    for a = 1 at n = 100).

    Args:
        X: (B, K+1, d) rescaled chain
        W: (B, K+1, d) rescaled coupled walk
        drift: Bounded drift a on R^d
        n: Lattice resolution
        T: Horizon

    Returns:
        np.ndarray: (B,) log-weights, exactly 0 for the Zero drift

    Raises:
        SkewSimError: HORIZON_EXCEEDS_PATH
    """
    size, points, d = X.shape
    steps = grid_index(n, T)
    if steps > points - 1:
        raise SkewSimError(
            ErrorCode.HORIZON_EXCEEDS_PATH,
            f"horizon {T} needs {steps} steps, path has {points - 1}",
        )
    if _is_zero(drift) or steps == 0:
        return np.zeros(size)

    a = drift.evaluate(X[:, :steps].reshape(-1, d)).reshape(size, steps, d)
    dW = np.diff(W[:, :steps + 1], axis=1)
    stochastic = np.einsum("bkd,bkd->b", a, dW)
    compensator = 0.5 * np.einsum("bkd,bkd->b", a, a) / n
    return stochastic - compensator


def log_weight_step(a: np.ndarray, dW: np.ndarray, n: int) -> np.ndarray:
    """One left-point term of log_weight_batch for a batch of current states: a (B, d), dW (B, d)."""
    return np.einsum("bd,bd->b", a, dW) - 0.5 * np.einsum("bd,bd->b", a, a) / n


def girsanov_weight(path: ScaledPath, drift: VectorField, T: float) -> float:
    """
    Discretised Girsanov weight E_T of a single path.

    Args:
        path: Rescaled zero-drift path
        drift: Bounded drift a
        T: Horizon, at most the path's

    Returns:
        float: Strictly positive weight, 1.0 for the Zero drift

    Raises:
        SkewSimError: HORIZON_EXCEEDS_PATH
    """
    log_weight = log_weight_batch(path.X[None], path.W[None], drift, path.resolution, T)[0]
    return float(np.exp(log_weight))


def shifted_brownian(path: ScaledPath, drift: VectorField) -> np.ndarray:
    """
    w~(t_k) = Wbar(t_k) - sum_{i<k} a(Xbar(t_i)) / n.

    Under the reweighted measure this is the driving Brownian motion of the drifted solution.
    """
    if _is_zero(drift):
        return path.W.copy()
    a = drift.evaluate(path.X[:-1])
    integral = np.vstack([np.zeros((1, path.X.shape[1])), np.cumsum(a, axis=0) / path.resolution])
    return path.W - integral


def effective_sample_size(weights: np.ndarray) -> float:
    """(sum w)^2 / sum w^2."""
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    squares = np.dot(weights, weights)
    if squares == 0:
        return 0.0
    return float(total * total / squares)


def self_normalized_estimate(values: np.ndarray, weights: np.ndarray) -> WeightedEstimate:
    """
    Self-normalised importance-sampling estimate with delta-method standard error.

    Args:
        values: phi_j per path, in path-index order
        weights: w_j per path, in path-index order

    Returns:
        WeightedEstimate

    Raises:
        SkewSimError: EMPTY_ENSEMBLE, DEGENERATE_WEIGHTS
    """
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if values.size == 0:
        raise SkewSimError(ErrorCode.EMPTY_ENSEMBLE, "weighted expectation of an empty ensemble")

    ess = effective_sample_size(weights)
    if ess < settings.MIN_EFFECTIVE_SAMPLE_SIZE:
        raise SkewSimError(
            ErrorCode.DEGENERATE_WEIGHTS,
            f"effective sample size {ess:.3f} below {settings.MIN_EFFECTIVE_SAMPLE_SIZE}",
        )

    total = weights.sum()
    estimate = float(np.dot(weights, values) / total)
    stderr = float(np.sqrt(np.dot(weights ** 2, (values - estimate) ** 2)) / total)
    return WeightedEstimate(estimate=estimate, stderr=stderr, effective_sample_size=ess)


def weighted_expectation(samples: Sequence[WeightedSample], functional: Functional) -> WeightedEstimate:
    """
    Self-normalised estimate of E[functional(X)] under the drifted law.

    Raises:
        SkewSimError: EMPTY_ENSEMBLE, DEGENERATE_WEIGHTS
    """
    if not samples:
        raise SkewSimError(ErrorCode.EMPTY_ENSEMBLE, "weighted expectation of an empty ensemble")
    values = np.array([functional(sample.path) for sample in samples], dtype=np.float64)
    weights = np.array([sample.weight for sample in samples], dtype=np.float64)
    return self_normalized_estimate(values, weights)


def unnormalized_estimate(values: np.ndarray, weights: np.ndarray) -> WeightedEstimate:
    """Plain mean of w_j phi_j with its sample standard error."""
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if values.size == 0:
        raise SkewSimError(ErrorCode.EMPTY_ENSEMBLE, "weighted expectation of an empty ensemble")
    products = weights * values
    stderr = float(products.std(ddof=1) / np.sqrt(products.size)) if products.size > 1 else 0.0
    return WeightedEstimate(
        estimate=float(products.mean()),
        stderr=stderr,
        effective_sample_size=effective_sample_size(weights),
    )


def unnormalized_expectation(samples: Sequence[WeightedSample], functional: Functional) -> WeightedEstimate:
    """
    Unnormalised estimate (1/m) sum w_j functional(path_j).

    Raises:
        SkewSimError: EMPTY_ENSEMBLE
    """
    if not samples:
        raise SkewSimError(ErrorCode.EMPTY_ENSEMBLE, "weighted expectation of an empty ensemble")
    values = np.array([functional(sample.path) for sample in samples], dtype=np.float64)
    weights = np.array([sample.weight for sample in samples], dtype=np.float64)
    return unnormalized_estimate(values, weights)
