"""
Lattice skew random walk: transition law, coupled walk, discrete local time,
sign-martingale and randomized simple walk.
"""
import itertools
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import ErrorCode, SkewSimError
from app.core.fields import VectorField, build_field
from app.core.rng import draws_per_step, path_generator, step_uniforms
from app.models.models import BetaDecomposition, ChainBatch, LatticeRun, StepLaw, StreamedBatch, ValidatedConfig
from app.services.girsanov_service import log_weight_step

logger = logging.getLogger(__name__)

_B1_SLACK = 1e-12


def decompose_beta(beta: float) -> BetaDecomposition:
    """
    Split a transverse coefficient into an even lattice shift and a step bias.

    bar = 2 * floor((beta + 1) / 2) is even, hat = beta - bar lies in [-1, 1].

    Args:
        beta: Finite real coefficient

    Returns:
        BetaDecomposition

    Raises:
        SkewSimError: NON_FINITE for nan or infinite input
    """
    if not math.isfinite(beta):
        raise SkewSimError(ErrorCode.NON_FINITE, f"beta must be finite, got {beta}")
    bar = 2 * math.floor((beta + 1.0) / 2.0)
    return BetaDecomposition(bar=int(bar), hat=beta - bar)


def decompose_surface_values(beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorised decomposition of field values on the hyperplane.

    Coordinate 1 is never decomposed: its shift is 0 and its bias is beta_1.

    Args:
        beta: (N, d) field values

    Returns:
        tuple: (shift (N, d) int64, bias (N, d) float)
    """
    shift = (2.0 * np.floor((beta + 1.0) / 2.0)).astype(np.int64)
    shift[:, 0] = 0
    return shift, beta - shift


def surface_values(field: VectorField, xi: np.ndarray) -> np.ndarray:
    """
    Evaluate b at rescaled transverse positions, enforcing b_1 in [-1, 1].

    Raises:
        SkewSimError: NON_FINITE or B1_RANGE
    """
    beta = field.evaluate(xi)
    if not np.all(np.isfinite(beta)):
        raise SkewSimError(ErrorCode.NON_FINITE, "field returned a non-finite value")
    if np.any(np.abs(beta[:, 0]) > 1.0 + _B1_SLACK):
        worst = float(np.max(np.abs(beta[:, 0])))
        raise SkewSimError(ErrorCode.B1_RANGE, f"field returned |b_1| = {worst} on the hyperplane")
    return np.clip(beta, [-1.0] + [-np.inf] * (beta.shape[1] - 1), [1.0] + [np.inf] * (beta.shape[1] - 1))


def step_law(xi: Sequence[float], field: VectorField) -> StepLaw:
    """
    One-step law of the chain on the hyperplane at transverse position xi.

    Args:
        xi: Rescaled transverse position Y / sqrt(n), length d - 1
        field: Validated field b

    Returns:
        StepLaw whose mean equals b(xi) coordinatewise
    """
    beta = surface_values(field, np.asarray(xi, dtype=np.float64).reshape(1, -1))
    shift, bias = decompose_surface_values(beta)
    p_up = (1.0 + bias[0]) / 2.0
    p_down = (1.0 - bias[0]) / 2.0
    return StepLaw(shift=shift[0], probs=np.stack([p_up, p_down], axis=1))


def one_step_law(state: Sequence[int], n: int, field: VectorField) -> Dict[Tuple[int, ...], float]:
    """
    Exact one-step law of the chain from a lattice state, by enumeration.

    Args:
        state: Lattice state v in Z^d
        n: Lattice resolution
        field: Validated field b

    Returns:
        Mapping increment -> probability over the 2^d atoms
    """
    state = np.asarray(state, dtype=np.int64)
    d = state.shape[0]
    signs = list(itertools.product((1, -1), repeat=d))

    if state[0] != 0:
        return {u: 1.0 / 2 ** d for u in signs}

    law = step_law(state[1:] / math.sqrt(n), field)
    out: Dict[Tuple[int, ...], float] = {}
    for u in signs:
        probability = 1.0
        for i, sign in enumerate(u):
            probability *= law.probs[i, 0] if sign == 1 else law.probs[i, 1]
        increment = tuple(int(law.shift[i] + sign) for i, sign in enumerate(u))
        out[increment] = out.get(increment, 0.0) + probability
    return out


def zstar_one_step_law(state: Sequence[int], n: int, field: VectorField) -> Dict[int, float]:
    """
    One-step law of the randomized walk Z* from a lattice state.

    Off the hyperplane the increment is sgn(U) dU; on it, an independent fair coin.
    """
    state = np.asarray(state, dtype=np.int64)
    if state[0] == 0:
        return {1: 0.5, -1: 0.5}
    out: Dict[int, float] = {}
    sign = int(np.sign(state[0]))
    for increment, probability in one_step_law(state, n, field).items():
        key = sign * increment[0]
        out[key] = out.get(key, 0.0) + probability
    return out


def _increments(
    state: np.ndarray,
    draws: np.ndarray,
    root_n: float,
    field: VectorField,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """
    Chain and coupled-walk increments for a batch of states.

    draws columns: chain 0..d-1, coupling d..2d-1, zeta 2d.

    Returns:
        tuple: (dX, dW, coin, surface rows, field values on those rows)
    """
    d = state.shape[1]
    chain_u = draws[:, :d]
    dx = np.where(chain_u < 0.5, 1, -1).astype(np.int64)
    dw = dx.copy()
    coin = np.where(draws[:, 2 * d] < 0.5, 1, -1).astype(np.int64)

    rows = np.flatnonzero(state[:, 0] == 0)
    beta = None
    if rows.size:
        beta = surface_values(field, state[rows, 1:] / root_n)
        shift, bias = decompose_surface_values(beta)
        dx[rows] = shift + np.where(chain_u[rows] < (1.0 + bias) / 2.0, 1, -1)
        dw[rows] = np.where(draws[rows, d:2 * d] < 0.5, 1, -1)
    return dx, dw, coin, rows, beta


def chain_step(state: Sequence[int], n: int, field: VectorField, rng: np.random.Generator) -> np.ndarray:
    """
    Advance one state by one chain step.

    Consumes d uniforms from rng (coordinate 1 first).

    Args:
        state: Current lattice state
        n: Lattice resolution
        field: Validated field b
        rng: Generator positioned by the caller

    Returns:
        np.ndarray: Next lattice state
    """
    state = np.asarray(state, dtype=np.int64).reshape(1, -1)
    d = state.shape[1]
    draws = np.concatenate([rng.random(d), np.full(d + 1, 0.5)]).reshape(1, -1)
    dx, _, _, _, _ = _increments(state, draws, math.sqrt(n), field)
    return state[0] + dx[0]


def simulate_batch(
    start: Sequence[int],
    n: int,
    steps: int,
    field: VectorField,
    generators: List[np.random.Generator],
    record_diagnostics: bool = False,
    first_index: int = 0,
) -> ChainBatch:
    """
    Run the chain for a batch of paths, each driven by its own generator.

    Args:
        start: Lattice start x^n
        n: Lattice resolution
        steps: Number of steps K
        field: Validated field b
        generators: One generator per path, in path order
        record_diagnostics: Record the martingale increments M
        first_index: Path index of the first generator

    Returns:
        ChainBatch
    """
    size = len(generators)
    start = np.asarray(start, dtype=np.int64)
    d = start.shape[0]
    root_n = math.sqrt(n)

    X = np.empty((size, steps + 1, d), dtype=np.int64)
    W = np.zeros((size, steps + 1, d), dtype=np.int64)
    L = np.zeros((size, steps + 1), dtype=np.int64)
    Z = np.zeros((size, steps + 1), dtype=np.int64)
    Zstar = np.zeros((size, steps + 1), dtype=np.int64)
    M = np.full((size, steps, d), np.nan) if record_diagnostics else None
    X[:, 0] = start

    chunk = chunk_steps(size, d)
    for begin in range(0, steps, chunk):
        width = min(chunk, steps - begin)
        block = step_uniforms(generators, width, d)
        for offset in range(width):
            k = begin + offset
            state = X[:, k]
            dx, dw, coin, rows, beta = _increments(state, block[:, offset], root_n, field)

            u = state[:, 0]
            on_surface = u == 0
            dz = np.sign(u) * dx[:, 0]

            X[:, k + 1] = state + dx
            W[:, k + 1] = W[:, k] + dw
            L[:, k + 1] = L[:, k] + on_surface
            Z[:, k + 1] = Z[:, k] + dz
            Zstar[:, k + 1] = Zstar[:, k] + np.where(on_surface, coin, dz)
            if M is not None and rows.size:
                M[rows, k] = dx[rows] - dw[rows] - beta

    return ChainBatch(X=X, W=W, L=L, Z=Z, Zstar=Zstar, M=M, resolution=n, first_index=first_index)


def chunk_steps(size: int, dimension: int) -> int:
    """Steps of uniforms drawn at once for a batch; never changes the numbers drawn."""
    by_cells = settings.UNIFORM_CHUNK_CELLS // max(size * draws_per_step(dimension), 1)
    return int(max(1, min(settings.UNIFORM_CHUNK_STEPS, by_cells)))


def stream_batch(
    start: Sequence[int],
    n: int,
    steps: int,
    field: VectorField,
    generators: List[np.random.Generator],
    record_steps: Sequence[int],
    drift: Optional[VectorField] = None,
    weight_steps: int = 0,
) -> StreamedBatch:
    """
    Run the chain for a batch of paths holding only the current state.

    Consumes exactly the uniforms of simulate_batch, so X, W and L at every
    recorded index equal the full-path values. Log-weights accumulate the
    left-point terms of log_weight_batch for k < weight_steps.

    Args:
        start: Lattice start x^n
        n: Lattice resolution
        steps: Number of steps K
        field: Validated field b
        generators: One generator per path, in path order
        record_steps: Grid indices in [0, K] to keep
        drift: Drift a; None for unit weights
        weight_steps: floor(nT) for the weights

    Returns:
        StreamedBatch
    """
    size = len(generators)
    start = np.asarray(start, dtype=np.int64)
    d = start.shape[0]
    root_n = math.sqrt(n)
    record_steps = tuple(sorted(set(int(k) for k in record_steps)))
    columns = {k: i for i, k in enumerate(record_steps)}

    X_at = np.zeros((size, len(record_steps), d), dtype=np.int64)
    W_at = np.zeros((size, len(record_steps), d), dtype=np.int64)
    L_at = np.zeros((size, len(record_steps)), dtype=np.int64)
    log_weights = np.zeros(size)

    state = np.broadcast_to(start, (size, d)).copy()
    w = np.zeros((size, d), dtype=np.int64)
    local_time = np.zeros(size, dtype=np.int64)

    def record(k: int):
        column = columns.get(k)
        if column is not None:
            X_at[:, column] = state
            W_at[:, column] = w
            L_at[:, column] = local_time

    record(0)
    chunk = chunk_steps(size, d)
    for begin in range(0, steps, chunk):
        width = min(chunk, steps - begin)
        block = step_uniforms(generators, width, d)
        for offset in range(width):
            k = begin + offset
            dx, dw, _, _, _ = _increments(state, block[:, offset], root_n, field)
            if drift is not None and k < weight_steps:
                log_weights += log_weight_step(drift.evaluate(state / root_n), dw / root_n, n)
            local_time += state[:, 0] == 0
            state += dx
            w += dw
            record(k + 1)

    return StreamedBatch(
        X_at=X_at, W_at=W_at, L_at=L_at, log_weights=log_weights, record_steps=record_steps, resolution=n,
    )


def run_chain(
    validated: ValidatedConfig,
    path_index: int,
    field: Optional[VectorField] = None,
    record_diagnostics: bool = True,
) -> LatticeRun:
    """
    One realization of the chain for a path of the ensemble.

    Args:
        validated: Validated config
        path_index: Path index j; the random stream is a function of (seed, j)
        field: Field override; defaults to the config's field
        record_diagnostics: Record the martingale increments M

    Returns:
        LatticeRun
    """
    config = validated.config
    if field is None:
        field = build_field(config.field, config.dimension)
    generator = path_generator(config.seed, path_index)
    batch = simulate_batch(
        validated.lattice_start,
        config.resolution_n,
        validated.steps,
        field,
        [generator],
        record_diagnostics=record_diagnostics,
        first_index=path_index,
    )
    return batch.run(0)


def martingale_bound(field: VectorField, dimension: int) -> float:
    """c_1 = (3 + 2 sup|beta|) sqrt(d), the bound on every martingale increment M."""
    return (3.0 + 2.0 * field.sup_norm()) * math.sqrt(dimension)


def surface_drift(run: LatticeRun, field: VectorField) -> np.ndarray:
    """
    beta(Y_i / sqrt(n)) 1{U_i = 0} for every step i < K.

    Returns:
        np.ndarray: (K, d)
    """
    out = np.zeros((run.steps, run.X.shape[1]))
    rows = np.flatnonzero(run.on_surface)
    if rows.size:
        out[rows] = surface_values(field, run.Y[rows] / math.sqrt(run.resolution))
    return out


def compensated_driver(run: LatticeRun, field: VectorField) -> np.ndarray:
    """
    Driving walk with the martingale correction folded in, in lattice units.

    X_k = x^n + What_k + sum_{i<k} beta(Y_i / sqrt(n)) 1{U_i = 0} holds with no remainder.

    Returns:
        np.ndarray: (K+1, d)
    """
    drift = np.vstack([np.zeros((1, run.X.shape[1])), np.cumsum(surface_drift(run, field), axis=0)])
    return (run.X - run.X[0]) - drift


def check_run_identities(run: LatticeRun, field: Optional[VectorField] = None) -> List[str]:
    """
    Check the pathwise identities of a lattice run in integer arithmetic.

    Args:
        run: Lattice run
        field: Needed only to check the martingale increment bound

    Returns:
        List of names of violated identities, empty when all hold
    """
    failures = []
    dX = np.diff(run.X, axis=0)
    dW = np.diff(run.W, axis=0)
    on_surface = run.on_surface

    coupled = np.where(on_surface[:, None], dX, dW)
    rebuilt = run.X[0] + np.vstack([np.zeros((1, run.X.shape[1]), dtype=np.int64), np.cumsum(coupled, axis=0)])
    if not np.array_equal(rebuilt, run.X):
        failures.append("coupling_identity")

    visits = np.concatenate([[0], np.cumsum(on_surface)])
    if not np.array_equal(visits, run.L):
        failures.append("local_time_count")

    if not np.array_equal(np.abs(run.U), abs(int(run.U[0])) + run.Z + run.L):
        failures.append("abs_u_decomposition")

    if not np.all(np.abs(np.diff(run.Zstar)) == 1):
        failures.append("randomized_walk_steps")

    if field is not None and run.M is not None:
        norms = np.linalg.norm(np.nan_to_num(run.M[on_surface]), axis=1) if on_surface.any() else np.zeros(0)
        if norms.size and norms.max() > martingale_bound(field, run.X.shape[1]) + 1e-9:
            failures.append("martingale_increment_bound")

    return failures
