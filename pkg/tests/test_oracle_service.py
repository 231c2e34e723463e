import math

import numpy as np
import pytest
from scipy import stats

from app.core.config import settings
from app.core.errors import ErrorCode, SkewSimError
from app.core.fields import build_field
from app.services.oracle_service import (
    exact_chain_law,
    law_cdf,
    law_sup_distance,
    reflected_local_time_mean,
    sign_probability,
    skew_bm_reference_cdf,
)
from app.services.skew_chain_service import one_step_law
from tests.conftest import constant


def _enumerate(start, k, n, field):
    """Brute-force law after k steps by pushing every state through its one-step law."""
    law = {tuple(start): 1.0}
    for _ in range(k):
        moved = {}
        for state, p in law.items():
            for increment, q in one_step_law(state, n, field).items():
                target = tuple(s + u for s, u in zip(state, increment))
                moved[target] = moved.get(target, 0.0) + p * q
        law = moved
    return {state: p for state, p in law.items() if p > 0}


def test_symmetric_two_steps(make_config):
    law = exact_chain_law(make_config(field=constant(0.0)), 2)
    assert law.as_dict() == {(-2,): pytest.approx(0.25), (0,): pytest.approx(0.5), (2,): pytest.approx(0.25)}


def test_reflected_two_steps(make_config):
    law = exact_chain_law(make_config(field=constant(1.0)), 2)
    assert law.as_dict() == {(0,): pytest.approx(0.5), (2,): pytest.approx(0.5)}


def test_skewed_one_step(make_config):
    law = exact_chain_law(make_config(field=constant(0.5)), 1)
    assert law.as_dict() == {(1,): pytest.approx(0.75), (-1,): pytest.approx(0.25)}


def test_d1_law_from_off_surface_start(make_config):
    validated = make_config(start=[0.2], field=constant(-0.6), resolution_n=25)
    field = build_field(validated.config.field, 1)
    law = exact_chain_law(validated, 6).as_dict()
    expected = _enumerate(validated.lattice_start, 6, 25, field)
    assert set(law) == set(expected)
    for state, p in expected.items():
        assert law[state] == pytest.approx(p, abs=1e-14)


def test_d2_law_matches_enumeration(make_config):
    validated = make_config(dimension=2, resolution_n=4, start=[0.0, 0.5], field=constant(0.5, 3.2))
    field = build_field(validated.config.field, 2)
    law = exact_chain_law(validated, 4)
    assert law.total_mass() == pytest.approx(1.0, abs=1e-12)
    expected = _enumerate(validated.lattice_start, 4, 4, field)
    got = law.as_dict()
    assert set(got) == set(expected)
    for state, p in expected.items():
        assert got[state] == pytest.approx(p, abs=1e-14)


def test_d2_law_state_dependent_field(make_config):
    field_spec = {
        "family": "SigmoidAffine",
        "params": {"offset": [0.0, -1.0], "amplitude": [0.8, 2.5], "frequency": [2.0]},
    }
    validated = make_config(dimension=2, resolution_n=9, start=[0.0, -0.4], field=field_spec)
    field = build_field(validated.config.field, 2)
    got = exact_chain_law(validated, 5).as_dict()
    expected = _enumerate(validated.lattice_start, 5, 9, field)
    assert set(got) == set(expected)
    for state, p in expected.items():
        assert got[state] == pytest.approx(p, abs=1e-14)


def test_dimension_too_large(make_config):
    validated = make_config(dimension=3, start=[0.0, 0.0, 0.0], field=constant(0.0, 0.0, 0.0))
    with pytest.raises(SkewSimError) as excinfo:
        exact_chain_law(validated, 1)
    assert excinfo.value.code == ErrorCode.DIMENSION_TOO_LARGE


def test_d2_step_budget(make_config, monkeypatch):
    monkeypatch.setattr(settings, "DP_MAX_STEPS_2D", 2)
    validated = make_config(dimension=2, start=[0.0, 0.0], field=constant(0.0, 0.0))
    with pytest.raises(SkewSimError) as excinfo:
        exact_chain_law(validated, 3)
    assert excinfo.value.code == ErrorCode.BUDGET_EXCEEDED


def test_sign_probability_symmetric(make_config):
    p_minus, p_zero, p_plus = sign_probability(exact_chain_law(make_config(field=constant(0.0)), 40))
    assert p_minus == pytest.approx(p_plus, abs=1e-14)
    assert p_minus + p_zero + p_plus == pytest.approx(1.0)


def test_sign_probability_reflected(make_config):
    p_minus, _, _ = sign_probability(exact_chain_law(make_config(field=constant(1.0)), 37))
    assert p_minus == 0.0


def test_sign_ratio_at_large_k(make_config):
    validated = make_config(resolution_n=10_000, field=constant(0.5))
    p_minus, _, p_plus = sign_probability(exact_chain_law(validated, 10_000))
    assert p_plus / (p_plus + p_minus) == pytest.approx(0.75, abs=0.005)


def test_reference_cdf_symmetric():
    cdf = skew_bm_reference_cdf(0.5, 2.0)
    y = np.linspace(-4.0, 4.0, 41)
    np.testing.assert_allclose(cdf(y), stats.norm.cdf(y, scale=math.sqrt(2.0)), atol=1e-14)


def test_reference_cdf_reflected():
    cdf = skew_bm_reference_cdf(1.0, 1.0)
    np.testing.assert_array_equal(cdf(np.array([-3.0, -0.1])), 0.0)
    y = np.array([0.0, 0.5, 2.0])
    np.testing.assert_allclose(cdf(y), 2.0 * stats.norm.cdf(y) - 1.0, atol=1e-14)


def test_reference_cdf_errors():
    with pytest.raises(SkewSimError) as excinfo:
        skew_bm_reference_cdf(1.5, 1.0)
    assert excinfo.value.code == ErrorCode.ALPHA_RANGE
    with pytest.raises(SkewSimError) as excinfo:
        skew_bm_reference_cdf(0.5, 0.0)
    assert excinfo.value.code == ErrorCode.NONPOSITIVE


def test_reflected_local_time_mean():
    assert reflected_local_time_mean(1.0) == pytest.approx(0.79788, abs=1e-5)
    assert reflected_local_time_mean(4.0) == pytest.approx(2.0 * reflected_local_time_mean(1.0))
    assert reflected_local_time_mean(0.0) == 0.0
    assert reflected_local_time_mean(1e-12) < 1e-5


def test_law_cdf_and_sup_distance(make_config):
    law = exact_chain_law(make_config(resolution_n=400, field=constant(0.0)), 400)
    support, cumulative = law_cdf(law)
    assert np.all(np.diff(support) > 0)
    assert cumulative[-1] == pytest.approx(1.0)
    assert law_sup_distance(law, stats.norm.cdf) < 0.05


def test_skewed_law_close_to_reference(make_config):
    law = exact_chain_law(make_config(resolution_n=2500, field=constant(0.5)), 2500)
    assert law_sup_distance(law, skew_bm_reference_cdf(0.75, 1.0)) < 0.03
