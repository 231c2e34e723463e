import numpy as np
import pytest

from app.core.errors import ErrorCode, SkewSimError
from app.core.fields import CallableField, Coefficient, build_coefficient, build_drift, build_field, eval_field
from app.schemas.schemas import CoefficientSpec, FamilyName, FieldSpec


def _spec(family: str, **params) -> FieldSpec:
    return FieldSpec.model_validate({"family": family, "params": params})


def test_constant_field_ignores_position():
    spec = _spec("Constant", value=[0.5, 2.0])
    np.testing.assert_array_equal(eval_field(spec, [3.7]), [0.5, 2.0])
    np.testing.assert_array_equal(eval_field(spec, [-100.0]), [0.5, 2.0])


def test_sigmoid_with_zero_frequency_is_offset():
    spec = _spec("SigmoidAffine", offset=[0.0, 0.0], amplitude=[1.0, 1.0], frequency=[0.0])
    np.testing.assert_array_equal(eval_field(spec, [12.0]), [0.0, 0.0])


def test_sigmoid_limit_and_bound():
    spec = _spec("SigmoidAffine", offset=[0.0, 0.0], amplitude=[0.5, 1.0], frequency=[1.0])
    np.testing.assert_allclose(eval_field(spec, [50.0]), [0.5, 1.0])

    field = build_field(spec, 2)
    xi = np.random.default_rng(3).normal(scale=10.0, size=(10_000, 1))
    values = field.evaluate(xi)
    assert values.shape == (10_000, 2)
    assert np.all(np.abs(values[:, 0]) <= field.b1_bound())
    assert field.b1_bound() == 0.5


def test_zero_field():
    field = build_field(_spec("Zero"), 3)
    assert field.is_zero
    np.testing.assert_array_equal(field.evaluate(np.ones((4, 2))), np.zeros((4, 3)))


def test_lipschitz_constants():
    spec = _spec("SigmoidAffine", offset=[0.1, 0.0, 0.0], amplitude=[0.2, 1.0, -2.0], frequency=[3.0, 4.0])
    field = build_field(spec, 3)
    np.testing.assert_allclose(field.lipschitz_constants(), [1.0, 5.0, 10.0])
    assert field.lipschitz_constant() == pytest.approx(np.linalg.norm([0.2, 1.0, -2.0]) * 5.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_field_lipschitz_bound_on_random_pairs(seed):
    rng = np.random.default_rng(seed)
    spec = _spec("SigmoidAffine", offset=[0.1, -0.3, 0.2], amplitude=[0.5, 1.5, -0.7], frequency=[2.0, -3.0])
    field = build_field(spec, 3)
    x = rng.normal(scale=0.5, size=(5000, 2))
    y = x + rng.normal(scale=0.05, size=(5000, 2))
    gap = np.linalg.norm(field.evaluate(x) - field.evaluate(y), axis=1)
    distance = np.linalg.norm(x - y, axis=1)
    assert np.all(gap <= field.lipschitz_constant() * distance + 1e-12)
    per_coordinate = np.abs(field.evaluate(x) - field.evaluate(y))
    assert np.all(per_coordinate <= field.lipschitz_constants() * distance[:, None] + 1e-12)
    # nearly attained near the origin
    assert np.max(gap / distance) > 0.8 * field.lipschitz_constant()


@pytest.mark.parametrize("seed", [0, 1])
def test_drift_lipschitz_bound_on_random_pairs(seed):
    rng = np.random.default_rng(seed)
    spec = _spec("SigmoidAffine", offset=[0.0, 0.4], amplitude=[1.0, -0.5], frequency=[1.5, 0.5])
    drift = build_drift(spec, 2)
    x = rng.normal(size=(5000, 2))
    y = rng.normal(size=(5000, 2))
    gap = np.linalg.norm(drift.evaluate(x) - drift.evaluate(y), axis=1)
    distance = np.linalg.norm(x - y, axis=1)
    assert np.all(gap <= drift.lipschitz_constant() * distance + 1e-12)


def test_drift_acts_on_whole_space():
    spec = _spec("SigmoidAffine", offset=[0.0, 0.0], amplitude=[1.0, 0.0], frequency=[1.0, 0.0])
    drift = build_drift(spec, 2)
    assert drift.input_dimension == 2
    np.testing.assert_allclose(drift.evaluate(np.array([[0.5, 9.0]])), [[np.tanh(0.5), 0.0]])


def test_rank_is_not_a_vector_field():
    with pytest.raises(SkewSimError) as excinfo:
        build_field(FieldSpec(family=FamilyName.RANK), 2)
    assert excinfo.value.code == ErrorCode.SCHEMA


def test_callable_field():
    field = CallableField(function=lambda p: np.hstack([np.zeros_like(p), p]), dimension=2, input_dimension=1, bound=1.0)
    np.testing.assert_array_equal(field([0.25]), [0.0, 0.25])
    assert field.sup_norm() == 1.0


def test_rank_coefficient():
    rank = build_coefficient(CoefficientSpec.model_validate({"family": "Rank", "params": {"below": -1.0, "above": 2.0}}))
    values = rank.evaluate(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))
    np.testing.assert_array_equal(values, [2.0, -1.0, -1.0])
    assert rank.bound() == 2.0
    assert not rank.is_zero


def test_sigmoid_coefficient():
    coefficient = Coefficient(FamilyName.SIGMOID_AFFINE, offset=1.0, amplitude=0.5, frequency=(1.0, -1.0))
    np.testing.assert_allclose(coefficient.evaluate(np.array([[0.3, 0.1]])), [1.0 + 0.5 * np.tanh(0.2)])
    assert coefficient.bound() == 1.5


def test_zero_coefficients():
    assert build_coefficient(CoefficientSpec(family=FamilyName.ZERO)).is_zero
    assert Coefficient(FamilyName.CONSTANT, value=0.0).is_zero
