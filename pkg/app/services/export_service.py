"""CSV and JSON writers for run outputs."""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

from app.core.config import settings
from app.models.models import LatticeLaw, ParticlePath, ScaledPath
from app.schemas.schemas import ConvergenceRow, RunManifest

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MANIFEST_FILE = "manifest.json"
TIMINGS_FILE = "timings.json"


def fmt(value: float) -> str:
    """Shortest round-trip-safe text: 17 significant digits, '.' decimal separator."""
    return f"{float(value):.{settings.CSV_SIGNIFICANT_DIGITS}g}"


def _write_rows(file_path: PathLike, header: Sequence[str], rows: Iterable[Sequence[str]]) -> Path:
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    return file_path


def write_path_csv(path: ScaledPath, file_path: PathLike) -> Path:
    """
    One rescaled path: columns t, x_1..x_d, l with K+1 data rows.

    Args:
        path: Rescaled path
        file_path: Destination

    Returns:
        Path of the written file
    """
    d = path.X.shape[1]
    header = ["t"] + [f"x_{i + 1}" for i in range(d)] + ["l"]
    rows = (
        [fmt(t)] + [fmt(v) for v in x] + [fmt(l)]
        for t, x, l in zip(path.times, path.X, path.L)
    )
    return _write_rows(file_path, header, rows)


def write_particle_csv(path: ParticlePath, file_path: PathLike) -> Path:
    """Particle path: columns t, x_1, x_2, l_plus, l_minus, l."""
    header = ["t", "x_1", "x_2", "l_plus", "l_minus", "l"]
    rows = (
        [fmt(v) for v in values]
        for values in zip(path.times, path.X1, path.X2, path.L_plus, path.L_minus, path.L)
    )
    return _write_rows(file_path, header, rows)


def write_law_csv(law: LatticeLaw, file_path: PathLike) -> Path:
    """Lattice law: state coordinates x_1..x_d (lattice units) and mass."""
    header = [f"x_{i + 1}" for i in range(law.dimension)] + ["mass"]
    rows = (
        [str(int(v)) for v in state] + [fmt(p)]
        for state, p in zip(law.states, law.mass)
    )
    return _write_rows(file_path, header, rows)


def write_convergence_csv(rows: List[ConvergenceRow], file_path: PathLike) -> Path:
    header = ["resolution_n", "ks_to_previous", "ks_to_reference", "dkw_band", "mean_terminal", "mean_local_time"]

    def cell(value):
        return "" if value is None else fmt(value)

    body = (
        [str(row.resolution_n), cell(row.ks_to_previous), cell(row.ks_to_reference),
         fmt(row.dkw_band), fmt(row.mean_terminal), fmt(row.mean_local_time)]
        for row in rows
    )
    return _write_rows(file_path, header, body)


def write_json(data: Dict[str, Any], file_path: PathLike) -> Path:
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return file_path


def write_manifest(manifest: RunManifest, out_dir: PathLike) -> Path:
    """
    Write manifest.json plus the timings.json sidecar it names.

    Timings are excluded from the manifest itself so re-runs are byte-identical.

    Returns:
        Path of manifest.json
    """
    out_dir = Path(out_dir)
    if manifest.timings:
        write_json(manifest.timings, out_dir / TIMINGS_FILE)
        if TIMINGS_FILE not in manifest.files:
            manifest = manifest.model_copy(update={"files": manifest.files + [TIMINGS_FILE]})
    path = write_json(manifest.model_dump(mode="json"), out_dir / MANIFEST_FILE)
    logger.info(f"Wrote manifest {path}")
    return path
