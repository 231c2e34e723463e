"""
Monte Carlo ensembles of the chain.

Paths are grouped into batches of consecutive indices whose size depends only
on the step count and on whether whole paths are kept, then run in-process or
on a process pool. Runs that only need grid snapshots stream the chain and
hold the current state alone. Results are folded in path-index order, so
every number is independent of the worker count.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import ErrorCode, SkewSimError
from app.core.fields import VectorField, build_drift, build_field
from app.core.rng import path_generator
from app.models.models import ChainBatch, EnsembleResult, ValidatedConfig
from app.services.girsanov_service import log_weight_batch
from app.services.skew_chain_service import check_run_identities, simulate_batch, stream_batch
from app.services.skorohod_service import rescale, tanaka_local_time
from app.utils.lattice import grid_index

logger = logging.getLogger(__name__)

Reducer = Callable[[ChainBatch], List[object]]


@dataclass(frozen=True)
class BatchJob:
    """Everything a worker needs to run paths [first, stop) of an ensemble."""
    seed: int
    start: Tuple[int, ...]
    resolution: int
    steps: int
    horizon: float
    field: VectorField
    drift: Optional[VectorField]
    first: int
    stop: int
    probe_indices: Tuple[int, ...] = ()
    record_diagnostics: bool = False
    check_identities: bool = False
    reducer: Optional[Reducer] = None

    @property
    def streaming(self) -> bool:
        return not (self.record_diagnostics or self.check_identities or self.reducer is not None)


@dataclass
class BatchSummary:
    terminal: np.ndarray
    terminal_W: np.ndarray
    local_time: np.ndarray
    probes: np.ndarray
    log_weights: np.ndarray
    identity_failures: int = 0
    max_martingale_increment: float = 0.0
    remainder_sq: Optional[np.ndarray] = None
    randomization_sq: Optional[np.ndarray] = None
    records: List[object] = dataclass_field(default_factory=list)


@dataclass(frozen=True)
class PathCollector:
    """Reducer that keeps every rescaled path of the batch (used for CSV export)."""
    horizon: float

    def __call__(self, batch: ChainBatch) -> List[object]:
        return [rescale(batch.run(row), batch.resolution, self.horizon) for row in range(batch.size)]


def batch_size(steps: int, streaming: bool = False) -> int:
    """Paths per batch; a function of K and of the batch mode alone."""
    if streaming:
        return int(max(1, settings.STREAM_BATCH_PATHS))
    by_budget = settings.BATCH_CELL_BUDGET // (steps + 1)
    return int(max(1, min(settings.MAX_BATCH_PATHS, by_budget)))


def batch_bounds(paths: int, steps: int, streaming: bool = False) -> List[Tuple[int, int]]:
    size = batch_size(steps, streaming)
    return [(first, min(first + size, paths)) for first in range(0, paths, size)]


def _run_streamed(job: BatchJob, generators: List) -> BatchSummary:
    last = min(grid_index(job.resolution, job.horizon), job.steps)
    batch = stream_batch(
        job.start,
        job.resolution,
        job.steps,
        job.field,
        generators,
        record_steps=(last,) + tuple(job.probe_indices),
        drift=job.drift,
        weight_steps=last,
    )
    root_n = math.sqrt(job.resolution)
    column = batch.column(last)
    probes = [batch.column(k) for k in job.probe_indices]
    return BatchSummary(
        terminal=batch.X_at[:, column] / root_n,
        terminal_W=batch.W_at[:, column] / root_n,
        local_time=batch.L_at[:, column] / root_n,
        probes=batch.L_at[:, probes] / root_n if probes else np.zeros((batch.size, 0)),
        log_weights=batch.log_weights,
    )


def run_batch(job: BatchJob) -> BatchSummary:
    """
    Run one batch of paths and reduce it to per-path summaries.

    Module level so that process pools can pickle it.
    """
    generators = [path_generator(job.seed, j) for j in range(job.first, job.stop)]
    if job.streaming:
        return _run_streamed(job, generators)
    batch = simulate_batch(
        job.start,
        job.resolution,
        job.steps,
        job.field,
        generators,
        record_diagnostics=job.record_diagnostics,
        first_index=job.first,
    )
    root_n = math.sqrt(job.resolution)
    last = min(grid_index(job.resolution, job.horizon), job.steps)

    summary = BatchSummary(
        terminal=batch.X[:, last] / root_n,
        terminal_W=batch.W[:, last] / root_n,
        local_time=batch.L[:, last] / root_n,
        probes=batch.L[:, list(job.probe_indices)] / root_n if job.probe_indices else np.zeros((batch.size, 0)),
        log_weights=np.zeros(batch.size),
    )

    if job.drift is not None:
        summary.log_weights = log_weight_batch(
            batch.X / root_n, batch.W / root_n, job.drift, job.resolution, job.horizon
        )

    if job.record_diagnostics and batch.M is not None:
        increments = np.nan_to_num(batch.M)
        norms = np.linalg.norm(increments, axis=2)
        summary.max_martingale_increment = float(norms.max()) if norms.size else 0.0
        remainder = np.cumsum(increments, axis=1) / root_n
        summary.remainder_sq = (
            np.max(np.sum(remainder ** 2, axis=2), axis=1) if remainder.shape[1] else np.zeros(batch.size)
        )
        summary.randomization_sq = np.max(((batch.Zstar - batch.Z) / root_n) ** 2, axis=1)

    if job.check_identities:
        for row in range(batch.size):
            run = batch.run(row)
            failures = check_run_identities(run, job.field)
            scaled_u = run.U / root_n
            if np.max(np.abs(tanaka_local_time(scaled_u) - run.L / root_n)) > 1e-12:
                failures.append("tanaka_local_time")
            if failures:
                logger.warning(f"Path {run.path_index} violates {', '.join(failures)}")
                summary.identity_failures += 1

    if job.reducer is not None:
        summary.records = list(job.reducer(batch))
    return summary


def _probe_indices(n: int, steps: int, probe_times: Sequence[float]) -> Tuple[int, ...]:
    indices = []
    for t in probe_times:
        index = grid_index(n, t)
        if index > steps:
            raise SkewSimError(ErrorCode.HORIZON_EXCEEDS_PATH, f"probe time {t} lies beyond the horizon")
        indices.append(index)
    return tuple(indices)


def _concat(parts: List[Optional[np.ndarray]]) -> Optional[np.ndarray]:
    if any(part is None for part in parts):
        return None
    return np.concatenate(parts)


def run_ensemble(
    validated: ValidatedConfig,
    threads: Optional[int] = None,
    field: Optional[VectorField] = None,
    drift: Optional[VectorField] = None,
    probe_times: Sequence[float] = (),
    record_diagnostics: bool = False,
    check_identities: bool = False,
    reducer: Optional[Reducer] = None,
    paths: Optional[int] = None,
) -> EnsembleResult:
    """
    Simulate paths 0..m-1 of a validated config.

    Args:
        validated: Validated config
        threads: Worker processes; defaults to settings.DEFAULT_THREADS
        field: Field override; must be picklable when threads > 1
        drift: Drift override; the config's drift is used otherwise
        probe_times: Times at which Lbar is recorded per path
        record_diagnostics: Record martingale and randomisation diagnostics
        check_identities: Check the pathwise identities on every path
        reducer: Picklable callable turning each batch into per-path records
        paths: Override of m

    Returns:
        EnsembleResult with per-path arrays in path-index order
    """
    config = validated.config
    d = config.dimension
    n = config.resolution_n
    m = config.paths_m if paths is None else paths
    threads = settings.DEFAULT_THREADS if threads is None else max(int(threads), 1)
    if m < 1:
        raise SkewSimError(ErrorCode.EMPTY_ENSEMBLE, f"ensemble needs m >= 1, got {m}")

    if field is None:
        field = build_field(config.field, d)
    if drift is None:
        drift = build_drift(config.drift, d)
    if getattr(drift, "is_zero", False):
        drift = None

    probe_indices = _probe_indices(n, validated.steps, probe_times)
    streaming = not (record_diagnostics or check_identities or reducer is not None)
    jobs = [
        BatchJob(
            seed=config.seed,
            start=validated.lattice_start,
            resolution=n,
            steps=validated.steps,
            horizon=config.horizon_t,
            field=field,
            drift=drift,
            first=first,
            stop=stop,
            probe_indices=probe_indices,
            record_diagnostics=record_diagnostics,
            check_identities=check_identities,
            reducer=reducer,
        )
        for first, stop in batch_bounds(m, validated.steps, streaming)
    ]
    mode = "streamed" if streaming else "full-path"
    logger.info(f"Ensemble: d={d} n={n} K={validated.steps} m={m} in {len(jobs)} {mode} batch(es) on {threads} worker(s)")

    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as executor:
            summaries = list(executor.map(run_batch, jobs))
    else:
        summaries = [run_batch(job) for job in jobs]

    records: List[object] = []
    for summary in summaries:
        records.extend(summary.records)

    return EnsembleResult(
        resolution=n,
        horizon=config.horizon_t,
        steps=validated.steps,
        terminal=np.concatenate([s.terminal for s in summaries]),
        terminal_W=np.concatenate([s.terminal_W for s in summaries]),
        local_time=np.concatenate([s.local_time for s in summaries]),
        probes=np.concatenate([s.probes for s in summaries]),
        probe_times=tuple(probe_times),
        log_weights=np.concatenate([s.log_weights for s in summaries]),
        identity_failures=sum(s.identity_failures for s in summaries),
        max_martingale_increment=max(s.max_martingale_increment for s in summaries),
        max_remainder_sq=_concat([s.remainder_sq for s in summaries]),
        max_randomization_gap_sq=_concat([s.randomization_sq for s in summaries]),
        records=records,
    )
