import pytest

from app.core.config import settings
from app.core.errors import ErrorCode, SkewSimError
from app.services.verification_service import SUITES, run_suite


@pytest.fixture
def small_suites(monkeypatch):
    """Suite sizes small enough for unit tests; statistical checks are not asserted."""
    monkeypatch.setattr(settings, "PATHWISE_RUNS", 5)
    monkeypatch.setattr(settings, "ONE_STEP_CASES", 20)
    monkeypatch.setattr(settings, "UNIQUENESS_RESOLUTIONS", [50, 200])
    monkeypatch.setattr(settings, "UNIQUENESS_DP_RESOLUTION", 16)
    monkeypatch.setattr(settings, "MAX_BATCH_PATHS", 16)
    monkeypatch.setattr(settings, "STREAM_BATCH_PATHS", 16)


def _checks(result):
    return {check.name: check for check in result.checks}


def test_unknown_suite(skew_config):
    with pytest.raises(SkewSimError) as excinfo:
        run_suite("nope", skew_config)
    assert excinfo.value.code == ErrorCode.UNKNOWN_SUITE


def test_pathwise_exact_checks(make_config, small_suites):
    [result] = run_suite("pathwise", make_config(paths_m=5))
    checks = _checks(result)
    for label in ("config", "d1", "d2", "d3"):
        for prefix in ("identities_", "martingale_increment_", "skorohod_representation_", "one_sided_sum_"):
            assert checks[prefix + label].passed, prefix + label
    assert set(result.metrics) == {"config", "d1", "d2", "d3"}


def test_one_step_suite_passes(skew_config, small_suites):
    [result] = run_suite("one-step", skew_config)
    assert result.passed
    assert [c.name for c in result.checks] == [
        "unit_mass", "conditional_mean", "product_form", "randomized_walk_law", "oracle_one_step",
    ]


def test_collisions_exact_checks(make_config, small_suites):
    [result] = run_suite("collisions", make_config(paths_m=50))
    checks = _checks(result)
    for name in (
        "frictionless_contribution",
        "frictionless_driver_identity",
        "reflection_order",
        "reflection_sign",
        "reflection_x2_driver",
        "local_time_split",
        "round_trip",
    ):
        assert checks[name].passed, name
    assert "frictionless_x1_law" in checks


def test_determinism_suite(make_config, small_suites):
    [result] = run_suite("determinism", make_config(paths_m=40, drift=dict(family="Constant", params={"value": [0.2]})))
    assert result.passed
    assert len(result.checks) == 4


def test_reflection_exact_checks(make_config, small_suites, monkeypatch):
    monkeypatch.setattr(settings, "REFLECTION_PROBE_TIMES", [0.25, 1.0])
    [result] = run_suite("reflection", make_config(paths_m=20))
    checks = _checks(result)
    assert checks["nonnegative"].passed
    assert checks["one_sided_reflected"].passed
    assert {"local_time_mean_t=1", "local_time_bound_t=0.25", "occupation_trend"} <= set(checks)
    assert result.metrics["probe_times"] == [0.25, 1.0]


def test_skew_law_check_names(make_config, monkeypatch):
    monkeypatch.setattr(settings, "SKEW_LAW_B1_VALUES", [0.5])
    [result] = run_suite("skew-law", make_config(paths_m=50))
    assert [c.name for c in result.checks] == [
        "mc_vs_oracle_b1=0.5", "oracle_vs_reference_b1=0.5", "sign_ratio_b1=0.5",
    ]
    signs = result.metrics["0.5"]
    assert signs["p_minus"] + signs["p_zero"] + signs["p_plus"] == pytest.approx(1.0)


def test_uniqueness_check_names(make_config, small_suites):
    [result] = run_suite("uniqueness-consistency", make_config(paths_m=30))
    names = [c.name for c in result.checks]
    assert names == [
        "resolution_50_vs_200_x1",
        "resolution_50_vs_200_x2",
        "mc_vs_oracle_n=16_x1",
        "mc_vs_oracle_n=16_x2",
    ]


def test_girsanov_reports_weights(make_config):
    [result] = run_suite("girsanov", make_config(paths_m=100))
    assert [c.name for c in result.checks] == ["drifted_mean", "mean_weight"]
    assert 0 < result.metrics["effective_sample_size"] <= 100


def test_suite_registry():
    assert list(SUITES) == [
        "pathwise", "one-step", "skew-law", "reflection", "girsanov", "collisions",
        "uniqueness-consistency", "determinism",
    ]
