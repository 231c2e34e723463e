import math

import numpy as np
import pytest

from app.core.errors import ErrorCode, SkewSimError
from app.core.fields import Coefficient
from app.models.models import CollisionModel
from app.schemas.schemas import CollisionSpec, FamilyName
from app.services.collision_service import (
    build_model,
    derive_coefficients,
    psi,
    simulate_particles,
    split_local_times,
    to_skew_form,
    validate_model,
)
from app.services.config_service import with_overrides
from tests.conftest import FRICTIONLESS, PERFECT_REFLECTION


def _constant_model(zeta1, zeta2, eta1, eta2, k1=None, k2=None) -> CollisionModel:
    zero = Coefficient(FamilyName.ZERO)
    return CollisionModel(
        k1=k1 or zero,
        k2=k2 or zero,
        zeta1=Coefficient(FamilyName.CONSTANT, value=zeta1),
        zeta2=Coefficient(FamilyName.CONSTANT, value=zeta2),
        eta1=Coefficient(FamilyName.CONSTANT, value=eta1),
        eta2=Coefficient(FamilyName.CONSTANT, value=eta2),
    )


def test_frictionless_coefficients():
    c = derive_coefficients(_constant_model(1.0, 1.0, 1.0, 1.0), (0.3, -2.0))
    assert (c.zeta, c.eta, c.alpha) == (1.0, 1.0, 0.5)
    assert (c.zeta_bar, c.eta_bar, c.beta1, c.beta2) == (0.0, 0.0, 0.0, 0.0)


def test_perfect_reflection_coefficients():
    c = derive_coefficients(_constant_model(-1.0, 1.0, -1.0, 1.0), (0.0, 0.0))
    assert (c.zeta, c.eta, c.alpha, c.beta1) == (0.0, 2.0, 1.0, 1.0)
    assert (c.zeta_bar, c.eta_bar, c.beta2) == (1.0, 1.0, 1.0)


def test_boundary_alpha_zero():
    c = derive_coefficients(_constant_model(3.0, 1.0, 3.0, 1.0), (1.0, 1.0))
    assert (c.zeta, c.eta, c.alpha, c.beta1) == (2.0, 0.0, 0.0, -1.0)


def test_constraint_violation():
    with pytest.raises(SkewSimError) as excinfo:
        derive_coefficients(_constant_model(-3.0, 1.0, 1.0, 1.0), (0.0, 0.0))
    assert excinfo.value.code == ErrorCode.CONSTRAINT_VIOLATION


def test_validation_grid_finds_local_violation():
    zeta1 = Coefficient(FamilyName.SIGMOID_AFFINE, offset=0.0, amplitude=3.0, frequency=(1.0, 0.0))
    model = CollisionModel(
        k1=Coefficient(FamilyName.ZERO),
        k2=Coefficient(FamilyName.ZERO),
        zeta1=zeta1,
        zeta2=Coefficient(FamilyName.CONSTANT, value=1.0),
        eta1=Coefficient(FamilyName.CONSTANT, value=1.0),
        eta2=Coefficient(FamilyName.CONSTANT, value=1.0),
    )
    derive_coefficients(model, (1.0, 0.0))
    with pytest.raises(SkewSimError) as excinfo:
        validate_model(model)
    assert excinfo.value.code == ErrorCode.CONSTRAINT_VIOLATION


def test_psi_round_trip():
    x1, x2 = np.array([0.3, -1.2]), np.array([2.0, 0.5])
    back1, back2 = psi(x1 + x2, x1 - x2)
    np.testing.assert_allclose(back1, x1)
    np.testing.assert_allclose(back2, x2)


def test_skew_form_frictionless():
    form = to_skew_form(_constant_model(1.0, 1.0, 1.0, 1.0))
    u = np.linspace(-3.0, 3.0, 13)
    np.testing.assert_array_equal(form.b1(u), 0.0)
    np.testing.assert_array_equal(form.b2(u), 0.0)
    assert form.drift.is_zero


def test_skew_form_perfect_reflection():
    form = to_skew_form(_constant_model(-1.0, 1.0, -1.0, 1.0))
    u = np.linspace(-3.0, 3.0, 13)
    np.testing.assert_array_equal(form.b1(u), 1.0)
    np.testing.assert_array_equal(form.b2(u), 1.0)


def test_skew_form_composes_with_coefficients():
    model = CollisionModel(
        k1=Coefficient(FamilyName.RANK, below=-0.5, above=0.25),
        k2=Coefficient(FamilyName.CONSTANT, value=0.1),
        zeta1=Coefficient(FamilyName.SIGMOID_AFFINE, offset=1.0, amplitude=0.5, frequency=(0.7, 0.2)),
        zeta2=Coefficient(FamilyName.CONSTANT, value=0.8),
        eta1=Coefficient(FamilyName.SIGMOID_AFFINE, offset=0.9, amplitude=-0.3, frequency=(-0.4, 1.0)),
        eta2=Coefficient(FamilyName.CONSTANT, value=1.2),
    )
    form = to_skew_form(model)
    for u in (-2.0, -0.3, 0.0, 1.7):
        c = derive_coefficients(model, psi(u, 0.0))
        assert form.b1(np.array([u]))[0] == pytest.approx(c.beta1, abs=1e-14)
        assert form.b2(np.array([u]))[0] == pytest.approx(c.beta2, abs=1e-14)
        assert abs(form.b1(np.array([u]))[0]) <= 1.0

    # (y, u) = (1, 1) is x = (1, 0): x1 > x2
    np.testing.assert_allclose(form.a1(np.array([1.0]), np.array([1.0])), [0.25 - 0.1])
    np.testing.assert_allclose(form.a2(np.array([1.0]), np.array([1.0])), [0.25 + 0.1])
    np.testing.assert_allclose(form.drift.evaluate(np.array([[-1.0, 1.0]])), [[-0.5 - 0.1, -0.5 + 0.1]])
    assert not form.drift.is_zero


def test_split_reflected():
    L = np.array([0.0, 0.1, 0.1, 0.3])
    plus, minus = split_local_times(L, 1.0)
    np.testing.assert_allclose(plus, L)
    np.testing.assert_allclose(minus, 0.0)


def test_split_symmetric():
    L = np.array([0.0, 0.1, 0.1, 0.3])
    plus, minus = split_local_times(L, np.full(3, 0.5))
    np.testing.assert_allclose(plus, L / 2)
    np.testing.assert_allclose(minus, L / 2)


def test_build_model_from_spec():
    model = build_model(CollisionSpec.model_validate(FRICTIONLESS))
    assert model.zeta1.value == 1.0
    assert model.k1.is_zero


def test_frictionless_particles(particle_config):
    model = build_model(particle_config.config.collision)
    ensemble, records = simulate_particles(model, (0.0, 0.0), particle_config, keep_paths=2)
    assert len(records) == particle_config.config.paths_m
    assert max(r.max_contribution for r in records) == 0.0
    assert max(max(r.driver_gap1, r.driver_gap2) for r in records) == 0.0
    assert max(r.split_gap for r in records) < 1e-10
    assert max(r.round_trip_gap for r in records) <= 1e-12
    np.testing.assert_array_equal(ensemble.log_weights, 0.0)

    X1 = np.array([r.terminal[0] for r in records])
    assert np.var(X1) == pytest.approx(particle_config.horizon / 2.0, abs=0.15)

    kept = [r.path for r in records if r.path is not None]
    assert len(kept) == 2
    assert kept[0].X1.shape == (particle_config.steps + 1,)


def test_perfect_reflection_keeps_order(particle_config):
    validated = with_overrides(particle_config, collision=PERFECT_REFLECTION)
    model = build_model(validated.config.collision)
    _, records = simulate_particles(model, (1.0, 0.0), validated)
    assert min(r.min_gap for r in records) >= 0.0
    assert not any(r.sign_changes for r in records)
    assert max(r.driver_gap2 for r in records) == 0.0
    assert max(r.split_gap for r in records) < 1e-10
    assert max(r.max_contribution for r in records) > 0.0


def test_perfect_reflection_split_is_one_sided(particle_config):
    validated = with_overrides(particle_config, collision=PERFECT_REFLECTION, paths_m=20)
    _, records = simulate_particles(build_model(validated.config.collision), (0.0, 0.0), validated, keep_paths=20)
    for record in records:
        np.testing.assert_allclose(record.path.L_plus, record.path.L)
        np.testing.assert_array_equal(record.path.L_minus, 0.0)


def test_rank_drift_produces_weights(particle_config):
    collision = dict(FRICTIONLESS, k1={"family": "Rank", "params": {"below": -0.5, "above": 0.5}})
    validated = with_overrides(particle_config, collision=collision, paths_m=50)
    ensemble, _ = simulate_particles(build_model(validated.config.collision), (0.0, 0.0), validated)
    assert np.any(ensemble.log_weights != 0.0)


def test_particles_need_dimension_two(skew_config):
    with pytest.raises(SkewSimError) as excinfo:
        simulate_particles(_constant_model(1.0, 1.0, 1.0, 1.0), (0.0, 0.0), skew_config)
    assert excinfo.value.code == ErrorCode.SHAPE_MISMATCH


def test_driving_motions_have_unit_variance(particle_config):
    model = build_model(particle_config.config.collision)
    _, records = simulate_particles(model, (0.0, 0.0), particle_config, keep_paths=particle_config.config.paths_m)
    B1 = np.array([r.path.B1[-1] for r in records])
    assert np.var(B1) == pytest.approx(1.0, abs=0.3)
    assert math.isfinite(B1.mean())
