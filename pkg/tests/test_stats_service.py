import numpy as np
import pytest
from scipy import stats

from app.core.errors import ErrorCode, SkewSimError
from app.services.stats_service import (
    dkw_band,
    empirical_law,
    ks_distance,
    lattice_ks_distance,
    mean_with_stderr,
    two_sample_ks,
)


def test_dkw_band_value():
    assert dkw_band(10 ** 5, 0.99) == pytest.approx(0.00515, abs=1e-5)
    assert dkw_band(400, 0.99) > dkw_band(1600, 0.99)


def test_dkw_band_rejects_empty():
    with pytest.raises(SkewSimError) as excinfo:
        dkw_band(0)
    assert excinfo.value.code == ErrorCode.EMPTY_SAMPLE


def test_empirical_law_sorts_per_coordinate():
    law = empirical_law(np.array([[3.0, -1.0], [1.0, 2.0], [2.0, 0.0]]))
    np.testing.assert_array_equal(law.coordinate(0), [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(law.coordinate(1), [-1.0, 0.0, 2.0])
    assert law.size == 3
    np.testing.assert_allclose(law.cdf([0.5, 1.0, 2.5, 9.0]), [0.0, 1 / 3, 2 / 3, 1.0])


def test_empirical_law_rejects_empty():
    with pytest.raises(SkewSimError) as excinfo:
        empirical_law(np.zeros(0))
    assert excinfo.value.code == ErrorCode.EMPTY_SAMPLE


def test_ks_on_quantile_sample():
    m = 500
    sample = stats.norm.ppf(np.arange(1, m + 1) / (m + 1))
    distance = ks_distance(empirical_law(sample), stats.norm.cdf)
    assert distance <= 1.0 / (m + 1) + 1e-12


def test_ks_exceeds_band_rarely():
    rng = np.random.default_rng(17)
    m = 1000
    band = dkw_band(m, 0.99)
    exceed = sum(ks_distance(empirical_law(rng.normal(size=m)), stats.norm.cdf) > band for _ in range(100))
    assert exceed <= 5


def test_lattice_ks_exact_match():
    law = empirical_law(np.array([-1.0, -1.0, 1.0, 1.0]))
    assert lattice_ks_distance(law, np.array([-1.0, 1.0]), np.array([0.5, 0.5])) == pytest.approx(0.0)


def test_lattice_ks_mismatch():
    law = empirical_law(np.array([1.0, 1.0, 1.0, 1.0]))
    assert lattice_ks_distance(law, np.array([-1.0, 1.0]), np.array([0.5, 0.5])) == pytest.approx(0.5)


def test_lattice_ks_between_atoms():
    law = empirical_law(np.array([0.0, 0.0]))
    distance = lattice_ks_distance(law, np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
    assert distance == pytest.approx(0.5)


def test_two_sample_ks():
    sample = np.linspace(-1.0, 1.0, 50)
    assert two_sample_ks(sample, sample) == 0.0
    assert two_sample_ks(sample, sample + 10.0) == 1.0


def test_mean_with_stderr():
    mean, stderr = mean_with_stderr(np.array([1.0, 2.0, 3.0, 4.0]))
    assert mean == 2.5
    assert stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2.0)
    assert mean_with_stderr(np.array([7.0])) == (7.0, 0.0)
