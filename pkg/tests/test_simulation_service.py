import json

import pytest

from app.core.errors import ErrorCode, SkewSimError
from app.services.config_service import with_overrides
from app.services.simulation_service import oracle, particles, simulate
from tests.conftest import FRICTIONLESS, PERFECT_REFLECTION, coefficient, constant


def test_single_path_csv(make_config, out_dir):
    validated = make_config(paths_m=1, horizon_t=0.505, output={"emit_paths": True})
    manifest = simulate(validated, out_dir)
    files = sorted((out_dir / "paths").iterdir())
    assert len(files) == 1
    lines = files[0].read_text().splitlines()
    assert validated.steps == 51
    assert len(lines) == 1 + validated.steps + 1
    assert "paths/path_000000.csv" in manifest.files


def test_zero_drift_ess_equals_m(skew_config, out_dir):
    manifest = simulate(skew_config, out_dir)
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["girsanov_ess"] == pytest.approx(skew_config.config.paths_m)
    assert "weighted" not in summary
    assert manifest.results["simulate"]["paths"] == skew_config.config.paths_m
    assert (out_dir / "manifest.json").exists()


def test_drift_reports_weighted_estimates(make_config, out_dir):
    manifest = simulate(make_config(drift=constant(0.2)), out_dir)
    weighted = manifest.results["simulate"]["weighted"]
    assert len(weighted["terminal_mean"]) == 1
    assert weighted["local_time_stderr"] > 0


def test_reruns_are_byte_identical(make_config, tmp_path):
    validated = make_config(paths_m=3, output={"emit_paths": True})
    simulate(validated, tmp_path / "a")
    simulate(validated, tmp_path / "b")
    for name in ("paths/path_000002.csv", "summary.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_particles_requires_collision_section(skew_config, out_dir):
    with pytest.raises(SkewSimError) as excinfo:
        particles(skew_config, out_dir)
    assert excinfo.value.code == ErrorCode.SCHEMA


def test_frictionless_particles_summary(particle_config, out_dir):
    manifest = particles(particle_config, out_dir)
    summary = manifest.results["particles"]
    assert manifest.passed
    assert summary["max_local_time_contribution"] == 0.0
    assert summary["max_split_gap"] < 1e-10


def test_reflection_particles_summary(particle_config, out_dir):
    validated = with_overrides(
        particle_config, collision=PERFECT_REFLECTION, start=[1.0, 0.0], paths_m=20, output={"emit_paths": True}
    )
    manifest = particles(validated, out_dir)
    summary = manifest.results["particles"]
    assert summary["min_gap_nonnegative"]
    assert len(list((out_dir / "particles").iterdir())) == 20
    header = (out_dir / "particles" / "particle_000000.csv").read_text().splitlines()[0]
    assert header == "t,x_1,x_2,l_plus,l_minus,l"


def test_oracle_writes_law(make_config, out_dir):
    manifest = oracle(make_config(resolution_n=400, field=constant(0.0)), out_dir)
    summary = manifest.results["oracle"]
    assert manifest.passed
    assert summary["steps"] == 400
    assert summary["reference_sup_distance"] < 0.05
    lines = (out_dir / "law.csv").read_text().splitlines()
    assert lines[0] == "x_1,mass"
    assert len(lines) == summary["support_size"] + 1


def test_oracle_without_reference(make_config, out_dir):
    manifest = oracle(make_config(start=[0.5]), out_dir)
    assert "reference_sup_distance" not in manifest.results["oracle"]


def test_small_drifted_run_skips_weighted_section(make_config, out_dir):
    manifest = simulate(make_config(paths_m=3, drift=constant(0.2)), out_dir)
    assert "weighted" not in manifest.results["simulate"]
    assert (out_dir / "summary.json").exists()


def test_drifted_particles_report_weighted_law(particle_config, out_dir):
    collision = dict(FRICTIONLESS, k1=coefficient(0.5))
    validated = with_overrides(particle_config, collision=collision, resolution_n=400, paths_m=2000)
    summary = particles(validated, out_dir).results["particles"]
    weighted = summary["weighted"]

    x1, x2 = weighted["terminal_mean"]
    se1, se2 = weighted["terminal_stderr"]
    assert abs(x1 - 0.5) <= 4.0 * se1 + 0.05
    assert abs(x2) <= 4.0 * se2 + 0.05
    assert abs(summary["terminal"]["mean"][0]) < 0.1
    assert weighted["local_time_mean"] == pytest.approx(
        weighted["local_time_plus_mean"] + weighted["local_time_minus_mean"], abs=1e-9
    )


def test_undrifted_particles_have_no_weighted_section(particle_config, out_dir):
    assert "weighted" not in particles(particle_config, out_dir).results["particles"]
