"""
Command-level workflows: simulate, particles and oracle runs with their
output files and manifests.
"""
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from app import __version__
from app.core.errors import ErrorCode, SkewSimError
from app.core.fields import build_field
from app.models.models import EnsembleResult, ParticleRecord, ValidatedConfig
from app.schemas.schemas import FamilyName, RunManifest
from app.services import export_service
from app.services.collision_service import build_model, simulate_particles
from app.services.ensemble_service import PathCollector, run_ensemble
from app.services.girsanov_service import effective_sample_size, self_normalized_estimate
from app.services.oracle_service import exact_chain_law, law_sup_distance, sign_probability, skew_bm_reference_cdf
from app.services.stats_service import mean_with_stderr
from app.utils.lattice import grid_index

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SPLIT_TOLERANCE = 1e-10


def new_manifest(command: str, validated: ValidatedConfig) -> RunManifest:
    config = validated.config
    return RunManifest(
        command=command,
        code_version=__version__,
        seed=config.seed,
        config=config.model_dump(mode="json", exclude_none=True),
    )


def _coordinate_stats(values: np.ndarray) -> Dict[str, List[float]]:
    columns = [mean_with_stderr(values[:, i]) for i in range(values.shape[1])]
    return {
        "mean": [c[0] for c in columns],
        "stderr": [c[1] for c in columns],
        "std": values.std(axis=0).tolist(),
        "min": values.min(axis=0).tolist(),
        "max": values.max(axis=0).tolist(),
    }


def weighted_section(columns: Dict[str, np.ndarray], weights: np.ndarray) -> Optional[Dict[str, Any]]:
    """
    Self-normalised estimates of each column with their standard errors.

    Returns None, with a warning, when the weights are degenerate.
    """
    section: Dict[str, Any] = {}
    try:
        for name, values in columns.items():
            if values.ndim == 1:
                estimate = self_normalized_estimate(values, weights)
                section[f"{name}_mean"] = estimate.estimate
                section[f"{name}_stderr"] = estimate.stderr
            else:
                estimates = [self_normalized_estimate(values[:, i], weights) for i in range(values.shape[1])]
                section[f"{name}_mean"] = [e.estimate for e in estimates]
                section[f"{name}_stderr"] = [e.stderr for e in estimates]
    except SkewSimError as e:
        if e.code != ErrorCode.DEGENERATE_WEIGHTS:
            raise
        logger.warning(f"Skipping weighted estimates: {e.message}")
        return None
    return section


def summarize_ensemble(validated: ValidatedConfig, ensemble: EnsembleResult) -> Dict[str, Any]:
    """
    Terminal-law statistics, local-time estimate and Girsanov diagnostics.

    Weighted estimates are only reported when the drift is not Zero.
    """
    u = ensemble.terminal[:, 0]
    mean_l, se_l = mean_with_stderr(ensemble.local_time)
    weights = ensemble.weights
    summary: Dict[str, Any] = {
        "paths": ensemble.size,
        "resolution_n": ensemble.resolution,
        "steps": ensemble.steps,
        "horizon_t": ensemble.horizon,
        "terminal": _coordinate_stats(ensemble.terminal),
        "sign_probability": {
            "p_minus": float(np.mean(u < 0)),
            "p_zero": float(np.mean(u == 0)),
            "p_plus": float(np.mean(u > 0)),
        },
        "local_time": {"mean": mean_l, "stderr": se_l},
        "girsanov_ess": effective_sample_size(weights),
        "mean_weight": float(weights.mean()),
    }

    if validated.config.drift.family != FamilyName.ZERO:
        weighted = weighted_section({"terminal": ensemble.terminal, "local_time": ensemble.local_time}, weights)
        if weighted is not None:
            summary["weighted"] = weighted
    return summary


def simulate(validated: ValidatedConfig, out_dir: PathLike, threads: Optional[int] = None) -> RunManifest:
    """
    Run the ensemble of a config and write its outputs.

    Writes paths/path_<j>.csv per path when emit_paths, summary.json when
    emit_summary, and the manifest naming them.
    """
    config = validated.config
    out_dir = Path(out_dir)
    started = time.perf_counter()

    reducer = PathCollector(config.horizon_t) if config.output.emit_paths else None
    ensemble = run_ensemble(validated, threads=threads, reducer=reducer)
    summary = summarize_ensemble(validated, ensemble)

    manifest = new_manifest("simulate", validated)
    files = []
    for index, path in enumerate(ensemble.records):
        name = f"paths/path_{index:06d}.csv"
        export_service.write_path_csv(path, out_dir / name)
        files.append(name)
    if config.output.emit_summary:
        export_service.write_json(summary, out_dir / "summary.json")
        files.append("summary.json")

    manifest = manifest.model_copy(update={
        "results": {"simulate": summary},
        "files": files,
        "timings": {"simulate_seconds": time.perf_counter() - started},
    })
    export_service.write_manifest(manifest, out_dir)
    return manifest


def summarize_particles(
    records: List[ParticleRecord],
    ensemble: EnsembleResult,
    drifted: bool = False,
) -> Dict[str, Any]:
    """
    Unweighted statistics of the particle runs, plus a `weighted` section
    for the drifted system when k1 or k2 is nonzero.
    """
    terminal = np.stack([r.terminal for r in records])
    local_time = np.array([r.terminal_local_time for r in records])
    L_plus = np.array([r.terminal_L_plus for r in records])
    L_minus = np.array([r.terminal_L_minus for r in records])
    summary: Dict[str, Any] = {
        "paths": len(records),
        "terminal": _coordinate_stats(terminal),
        "local_time_mean": mean_with_stderr(local_time)[0],
        "local_time_plus_mean": mean_with_stderr(L_plus)[0],
        "local_time_minus_mean": mean_with_stderr(L_minus)[0],
        "max_local_time_contribution": max(r.max_contribution for r in records),
        "min_gap": min(r.min_gap for r in records),
        "min_gap_nonnegative": all(r.min_gap >= 0 for r in records),
        "max_split_gap": max(r.split_gap for r in records),
        "max_driver_gap": [max(r.driver_gap1 for r in records), max(r.driver_gap2 for r in records)],
        "girsanov_ess": effective_sample_size(ensemble.weights),
    }
    if drifted:
        columns = {"terminal": terminal, "local_time": local_time, "local_time_plus": L_plus, "local_time_minus": L_minus}
        weighted = weighted_section(columns, ensemble.weights)
        if weighted is not None:
            summary["weighted"] = weighted
    return summary


def particles(validated: ValidatedConfig, out_dir: PathLike, threads: Optional[int] = None) -> RunManifest:
    """
    Simulate the two-particle system of a config's collision section.

    Raises:
        SkewSimError: SCHEMA without a collision section, CONSTRAINT_VIOLATION
    """
    config = validated.config
    if config.collision is None:
        raise SkewSimError(ErrorCode.SCHEMA, "config has no collision section")
    out_dir = Path(out_dir)
    started = time.perf_counter()

    keep = config.paths_m if config.output.emit_paths else 0
    model = build_model(config.collision)
    ensemble, records = simulate_particles(model, config.start, validated, threads, keep)
    summary = summarize_particles(records, ensemble, drifted=not (model.k1.is_zero and model.k2.is_zero))
    passed = summary["max_split_gap"] < SPLIT_TOLERANCE

    files = []
    for record in records:
        if record.path is not None:
            name = f"particles/particle_{record.path_index:06d}.csv"
            export_service.write_particle_csv(record.path, out_dir / name)
            files.append(name)
    if config.output.emit_summary:
        export_service.write_json(summary, out_dir / "summary.json")
        files.append("summary.json")

    manifest = new_manifest("particles", validated).model_copy(update={
        "results": {"particles": summary},
        "passed": passed,
        "files": files,
        "timings": {"particles_seconds": time.perf_counter() - started},
    })
    export_service.write_manifest(manifest, out_dir)
    return manifest


def oracle(validated: ValidatedConfig, out_dir: PathLike) -> RunManifest:
    """
    Exact law after floor(nT) steps, written as law.csv.

    For d = 1 with a Constant field started at 0 the sup-distance to the
    closed-form skew law is reported as well.
    """
    config = validated.config
    out_dir = Path(out_dir)
    started = time.perf_counter()

    k = grid_index(config.resolution_n, config.horizon_t)
    law = exact_chain_law(validated, k)
    p_minus, p_zero, p_plus = sign_probability(law)
    summary: Dict[str, Any] = {
        "steps": k,
        "support_size": int(law.states.shape[0]),
        "total_mass": law.total_mass(),
        "sign_probability": {"p_minus": p_minus, "p_zero": p_zero, "p_plus": p_plus},
    }
    if config.dimension == 1 and config.field.family == FamilyName.CONSTANT and validated.lattice_start[0] == 0:
        b1 = float(build_field(config.field, 1).offset[0])
        summary["reference_sup_distance"] = law_sup_distance(law, skew_bm_reference_cdf((1.0 + b1) / 2.0, config.horizon_t))

    export_service.write_law_csv(law, out_dir / "law.csv")
    files = ["law.csv"]
    if config.output.emit_summary:
        export_service.write_json(summary, out_dir / "summary.json")
        files.append("summary.json")

    manifest = new_manifest("oracle", validated).model_copy(update={
        "results": {"oracle": summary},
        "passed": abs(summary["total_mass"] - 1.0) <= 1e-10,
        "files": files,
        "timings": {"oracle_seconds": time.perf_counter() - started},
    })
    export_service.write_manifest(manifest, out_dir)
    return manifest
