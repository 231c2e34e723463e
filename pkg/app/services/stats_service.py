"""
Empirical laws, Kolmogorov-Smirnov distances and DKW bands.
"""
import math
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import stats

from app.core.config import settings
from app.core.errors import ErrorCode, SkewSimError
from app.models.models import EmpiricalLaw

CDF = Callable[[np.ndarray], np.ndarray]


def empirical_law(samples: np.ndarray) -> EmpiricalLaw:
    """
    Sort an ensemble of terminal values per coordinate.

    Args:
        samples: (m,) or (m, d) values, one row per path

    Returns:
        EmpiricalLaw

    Raises:
        SkewSimError: EMPTY_SAMPLE
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] == 0:
        raise SkewSimError(ErrorCode.EMPTY_SAMPLE, "empirical law of an empty sample")
    return EmpiricalLaw(values=np.sort(samples.T, axis=1))


def ks_distance(emp: EmpiricalLaw, ref: CDF, coordinate: int = 0) -> float:
    """
    One-sample KS statistic against a continuous CDF (both one-sided gaps).

    Raises:
        SkewSimError: EMPTY_SAMPLE
    """
    if emp.size == 0:
        raise SkewSimError(ErrorCode.EMPTY_SAMPLE, "KS distance of an empty sample")
    return float(stats.kstest(emp.coordinate(coordinate), ref).statistic)


def lattice_ks_distance(emp: EmpiricalLaw, support: np.ndarray, masses: np.ndarray, coordinate: int = 0) -> float:
    """
    KS distance between an empirical law and a discrete law.

    Both CDFs are right-continuous step functions, so the supremum is
    attained on the union of sample points and atoms.

    Args:
        emp: Empirical law
        support: Sorted atoms of the discrete law
        masses: Mass per atom

    Raises:
        SkewSimError: EMPTY_SAMPLE
    """
    if emp.size == 0:
        raise SkewSimError(ErrorCode.EMPTY_SAMPLE, "KS distance of an empty sample")
    points = np.union1d(emp.coordinate(coordinate), support)
    reference = np.concatenate([[0.0], np.cumsum(masses)])
    ref_cdf = reference[np.searchsorted(support, points, side="right")]
    return float(np.max(np.abs(emp.cdf(points, coordinate) - ref_cdf)))


def dkw_band(m: int, confidence: Optional[float] = None) -> float:
    """
    Dvoretzky-Kiefer-Wolfowitz half-width sqrt(ln(2 / (1 - confidence)) / (2 m)).

    Args:
        m: Sample size
        confidence: Coverage level, defaults to settings.DKW_CONFIDENCE

    Raises:
        SkewSimError: EMPTY_SAMPLE
    """
    if m < 1:
        raise SkewSimError(ErrorCode.EMPTY_SAMPLE, f"DKW band needs m >= 1, got {m}")
    if confidence is None:
        confidence = settings.DKW_CONFIDENCE
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * m))


def two_sample_ks(first: np.ndarray, second: np.ndarray) -> float:
    """Two-sample KS statistic."""
    if len(first) == 0 or len(second) == 0:
        raise SkewSimError(ErrorCode.EMPTY_SAMPLE, "two-sample KS with an empty sample")
    return float(stats.ks_2samp(first, second).statistic)


def mean_with_stderr(values: np.ndarray) -> Tuple[float, float]:
    """Sample mean and its standard error (ddof = 1)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise SkewSimError(ErrorCode.EMPTY_SAMPLE, "mean of an empty sample")
    if values.size == 1:
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))
