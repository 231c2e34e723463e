import json

import pytest

from app.core.config import settings
from app.services.config_service import validate_config


def config_dict(**overrides) -> dict:
    """Small d = 1 run: skew coefficient 0.5 from the origin."""
    data = {
        "dimension": 1,
        "resolution_n": 100,
        "horizon_t": 1.0,
        "paths_m": 200,
        "start": [0.0],
        "field": {"family": "Constant", "params": {"value": [0.5]}},
        "seed": 20240611,
    }
    data.update(overrides)
    return data


def constant(*values) -> dict:
    return {"family": "Constant", "params": {"value": list(values)}}


def sigmoid_d2() -> dict:
    return {
        "family": "SigmoidAffine",
        "params": {"offset": [0.2, 1.5], "amplitude": [0.6, -2.0], "frequency": [1.3]},
    }


def coefficient(value: float) -> dict:
    return {"family": "Constant", "params": {"value": value}}


FRICTIONLESS = {
    "zeta1": coefficient(1.0),
    "zeta2": coefficient(1.0),
    "eta1": coefficient(1.0),
    "eta2": coefficient(1.0),
}

PERFECT_REFLECTION = {
    "zeta1": coefficient(-1.0),
    "zeta2": coefficient(1.0),
    "eta1": coefficient(-1.0),
    "eta2": coefficient(1.0),
}


@pytest.fixture
def make_config():
    """Factory for validated configs built on the small d = 1 defaults."""
    def _make(**overrides):
        return validate_config(config_dict(**overrides))
    return _make


@pytest.fixture
def skew_config(make_config):
    return make_config()


@pytest.fixture
def d2_config(make_config):
    return make_config(dimension=2, start=[0.0, 0.3], field=sigmoid_d2(), paths_m=50)


@pytest.fixture
def particle_config(make_config):
    return make_config(
        dimension=2,
        start=[0.0, 0.0],
        field=constant(0.0, 0.0),
        paths_m=300,
        collision=FRICTIONLESS,
    )


@pytest.fixture
def write_config(tmp_path):
    """Write a config dict to a JSON file and return its path."""
    def _write(data: dict, name: str = "config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path
    return _write


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / "out"


@pytest.fixture
def strict_dkw(monkeypatch):
    """Statistical checks at 0.999 DKW confidence."""
    monkeypatch.setattr(settings, "DKW_CONFIDENCE", 0.999)
