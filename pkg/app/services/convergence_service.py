"""Empirical convergence of the terminal law as the lattice resolution grows."""
import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.fields import build_field
from app.models.models import ValidatedConfig
from app.schemas.schemas import ConvergenceRow, FamilyName
from app.services.config_service import with_overrides
from app.services.ensemble_service import run_ensemble
from app.services.oracle_service import skew_bm_reference_cdf
from app.services.stats_service import dkw_band, empirical_law, ks_distance, mean_with_stderr, two_sample_ks

logger = logging.getLogger(__name__)


def reference_cdf(validated: ValidatedConfig) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    """
    Closed-form law of coordinate 1 at the horizon, when one is known.

    Available for a Constant field with zero drift started on the hyperplane:
    coordinate 1 is then skew Brownian motion with alpha = (1 + b_1) / 2.
    """
    config = validated.config
    if config.field.family != FamilyName.CONSTANT or config.drift.family != FamilyName.ZERO:
        return None
    if validated.lattice_start[0] != 0:
        return None
    b1 = float(build_field(config.field, config.dimension).offset[0])
    return skew_bm_reference_cdf((1.0 + b1) / 2.0, config.horizon_t)


def run_convergence(
    validated: ValidatedConfig,
    resolutions: Sequence[int],
    threads: Optional[int] = None,
) -> Tuple[List[ConvergenceRow], Optional[bool]]:
    """
    Run the engine at each resolution and compare successive terminal laws.

    Args:
        validated: Base config; only resolution_n changes between rows
        resolutions: Lattice resolutions, in the order given
        threads: Worker processes

    Returns:
        tuple: (one row per resolution, trend flag). The flag is None for a
        single resolution; otherwise True when the distances to the reference
        (or between successive laws) never grow by more than twice the DKW band.
    """
    reference = reference_cdf(validated)
    band = dkw_band(validated.config.paths_m)
    rows: List[ConvergenceRow] = []
    previous = None

    for n in resolutions:
        ensemble = run_ensemble(with_overrides(validated, resolution_n=int(n)), threads=threads)
        terminal = ensemble.terminal[:, 0]
        row = ConvergenceRow(
            resolution_n=int(n),
            ks_to_previous=None if previous is None else two_sample_ks(previous, terminal),
            ks_to_reference=None if reference is None else ks_distance(empirical_law(terminal), reference),
            dkw_band=band,
            mean_terminal=mean_with_stderr(terminal)[0],
            mean_local_time=mean_with_stderr(ensemble.local_time)[0],
        )
        logger.info(f"Convergence n={n}: ks_prev={row.ks_to_previous} ks_ref={row.ks_to_reference}")
        rows.append(row)
        previous = terminal

    if len(rows) < 2:
        return rows, None

    if reference is not None:
        distances = [row.ks_to_reference for row in rows]
    else:
        distances = [row.ks_to_previous for row in rows[1:]]
    monotone = all(later <= earlier + 2.0 * band for earlier, later in zip(distances, distances[1:]))
    return rows, monotone


def within_band(rows: List[ConvergenceRow]) -> List[bool]:
    """
    Whether each row's distance to the reference lies inside the DKW band
    widened by the lattice spacing 1 / sqrt(n) times the largest reference density.
    """
    flags = []
    for row in rows:
        if row.ks_to_reference is None:
            flags.append(False)
            continue
        allowance = row.dkw_band + 2.0 / math.sqrt(row.resolution_n) / math.sqrt(2.0 * math.pi)
        flags.append(row.ks_to_reference <= allowance)
    return flags
