import pytest

from app.services.convergence_service import reference_cdf, run_convergence, within_band
from tests.conftest import constant, sigmoid_d2


def test_single_resolution_has_no_trend(skew_config):
    rows, monotone = run_convergence(skew_config, [100])
    assert monotone is None
    assert len(rows) == 1
    assert rows[0].ks_to_previous is None
    assert rows[0].ks_to_reference is not None


def test_two_resolutions(skew_config):
    rows, monotone = run_convergence(skew_config, [25, 100])
    assert isinstance(monotone, bool)
    assert [row.resolution_n for row in rows] == [25, 100]
    assert rows[1].ks_to_previous is not None
    assert all(row.dkw_band == pytest.approx(rows[0].dkw_band) for row in rows)
    assert len(within_band(rows)) == 2


def test_reference_availability(make_config):
    assert reference_cdf(make_config()) is not None
    assert reference_cdf(make_config(start=[0.5])) is None
    assert reference_cdf(make_config(dimension=2, start=[0.0, 0.0], field=sigmoid_d2())) is None
    assert reference_cdf(make_config(drift=constant(0.1))) is None


def test_reference_is_skew_law(make_config):
    cdf = reference_cdf(make_config(field=constant(1.0)))
    assert cdf(-0.5) == 0.0


def test_without_reference_rows_compare_successive_laws(make_config):
    validated = make_config(start=[0.3], paths_m=100)
    rows, monotone = run_convergence(validated, [16, 64, 256])
    assert all(row.ks_to_reference is None for row in rows)
    assert within_band(rows) == [False, False, False]
    assert monotone is not None
