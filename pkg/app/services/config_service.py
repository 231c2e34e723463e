"""Config ingestion and validation service."""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import ValidationError

from app.core.errors import ConfigValidationError, ErrorCode
from app.models.models import ValidatedConfig
from app.schemas.schemas import (
    CoefficientSpec,
    ConfigIssue,
    FamilyName,
    FieldSpec,
    SimConfig,
)
from app.utils.lattice import lattice_start, step_count

logger = logging.getLogger(__name__)

RawConfig = Union[Dict[str, Any], SimConfig, ValidatedConfig]


def load_config(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a JSON config file.

    Args:
        path: Path to the JSON config

    Returns:
        Parsed JSON object (not yet validated)
    """
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _issue(code: ErrorCode, location: str, message: str) -> ConfigIssue:
    return ConfigIssue(code=code, location=location, message=message)


def _schema_issues(error: ValidationError) -> List[ConfigIssue]:
    issues = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        issues.append(_issue(ErrorCode.SCHEMA, location, item["msg"]))
    return issues


def _length_issues(location: str, values: Optional[List[float]], expected: int, name: str) -> List[ConfigIssue]:
    if values is None:
        return [_issue(ErrorCode.SHAPE_MISMATCH, f"{location}.params.{name}", f"{name} is required")]
    if len(values) != expected:
        return [_issue(
            ErrorCode.SHAPE_MISMATCH,
            f"{location}.params.{name}",
            f"expected {expected} values, got {len(values)}",
        )]
    if not all(math.isfinite(v) for v in values):
        return [_issue(ErrorCode.NON_FINITE, f"{location}.params.{name}", "values must be finite")]
    return []


def _vector_field_issues(spec: FieldSpec, location: str, dimension: int, input_dimension: int) -> List[ConfigIssue]:
    """Shape checks shared by the field b and the drift a."""
    params = spec.params
    if spec.family == FamilyName.RANK:
        return [_issue(ErrorCode.SCHEMA, f"{location}.family", "Rank is only available for collision drifts")]
    if spec.family == FamilyName.ZERO:
        return []
    if spec.family == FamilyName.CONSTANT:
        return _length_issues(location, params.value, dimension, "value")

    issues = _length_issues(location, params.offset, dimension, "offset")
    issues += _length_issues(location, params.amplitude, dimension, "amplitude")
    issues += _length_issues(location, params.frequency, input_dimension, "frequency")
    return issues


def _b1_issues(spec: FieldSpec) -> List[ConfigIssue]:
    params = spec.params
    if spec.family == FamilyName.CONSTANT and params.value:
        if abs(params.value[0]) > 1.0:
            return [_issue(ErrorCode.B1_RANGE, "field.params.value", f"|b_1| = {abs(params.value[0])} exceeds 1")]
    if spec.family == FamilyName.SIGMOID_AFFINE and params.offset and params.amplitude:
        bound = abs(params.offset[0]) + abs(params.amplitude[0])
        if bound > 1.0:
            return [_issue(ErrorCode.B1_RANGE, "field.params", f"|c_1| + |A_1| = {bound} exceeds 1")]
    return []


def _coefficient_issues(spec: CoefficientSpec, location: str, allow_rank: bool) -> List[ConfigIssue]:
    params = spec.params
    if spec.family == FamilyName.ZERO:
        return []
    if spec.family == FamilyName.CONSTANT:
        if params.value is None:
            return [_issue(ErrorCode.SHAPE_MISMATCH, f"{location}.params.value", "value is required")]
        return []
    if spec.family == FamilyName.RANK:
        if not allow_rank:
            return [_issue(ErrorCode.SCHEMA, f"{location}.family", "Rank coefficients are not Lipschitz")]
        if params.below is None or params.above is None:
            return [_issue(ErrorCode.SHAPE_MISMATCH, f"{location}.params", "below and above are required")]
        return []
    issues = []
    if params.offset is None or params.amplitude is None:
        issues.append(_issue(ErrorCode.SHAPE_MISMATCH, f"{location}.params", "offset and amplitude are required"))
    if params.frequency is None or len(params.frequency) != 2:
        issues.append(_issue(ErrorCode.SHAPE_MISMATCH, f"{location}.params.frequency", "expected 2 values"))
    return issues


def collect_config_issues(config: SimConfig) -> List[ConfigIssue]:
    """
    Check every invariant of a parsed config.

    Args:
        config: Parsed config

    Returns:
        List of issues, empty when the config is valid
    """
    issues: List[ConfigIssue] = []

    for name, value in (
        ("dimension", config.dimension),
        ("resolution_n", config.resolution_n),
        ("paths_m", config.paths_m),
    ):
        if value < 1:
            issues.append(_issue(ErrorCode.NONPOSITIVE, name, f"{name} must be >= 1, got {value}"))
    if not (config.horizon_t > 0 and math.isfinite(config.horizon_t)):
        issues.append(_issue(ErrorCode.NONPOSITIVE, "horizon_t", f"horizon_t must be > 0, got {config.horizon_t}"))

    if config.seed is None:
        issues.append(_issue(ErrorCode.SEED_MISSING, "seed", "a seed is required for reproducible runs"))
    elif not 0 <= config.seed < 2 ** 64:
        issues.append(_issue(ErrorCode.SEED_RANGE, "seed", "seed must be a 64-bit unsigned integer"))

    # Shape checks need a usable dimension
    if config.dimension < 1:
        return issues

    d = config.dimension
    if len(config.start) != d:
        issues.append(_issue(ErrorCode.SHAPE_MISMATCH, "start", f"expected {d} values, got {len(config.start)}"))
    elif not all(math.isfinite(v) for v in config.start):
        issues.append(_issue(ErrorCode.NON_FINITE, "start", "start must be finite"))

    field_issues = _vector_field_issues(config.field, "field", d, d - 1)
    issues += field_issues
    if not field_issues:
        issues += _b1_issues(config.field)
    issues += _vector_field_issues(config.drift, "drift", d, d)

    if config.collision is not None:
        if d != 2:
            issues.append(_issue(ErrorCode.SHAPE_MISMATCH, "collision", "the collision model needs dimension 2"))
        for name in ("k1", "k2"):
            issues += _coefficient_issues(getattr(config.collision, name), f"collision.{name}", allow_rank=True)
        for name in ("zeta1", "zeta2", "eta1", "eta2"):
            issues += _coefficient_issues(getattr(config.collision, name), f"collision.{name}", allow_rank=False)

    return issues


def validate_config(raw: RawConfig) -> ValidatedConfig:
    """
    Validate a raw config and compute its lattice start.

    Pure and idempotent: validating a ValidatedConfig returns an equal one.

    Args:
        raw: JSON object, parsed SimConfig, or an already validated config

    Returns:
        ValidatedConfig

    Raises:
        ConfigValidationError: With every issue found
    """
    if isinstance(raw, ValidatedConfig):
        raw = raw.config
    if isinstance(raw, SimConfig):
        config = raw
    else:
        try:
            config = SimConfig.model_validate(raw)
        except ValidationError as e:
            raise ConfigValidationError(_schema_issues(e))

    issues = collect_config_issues(config)
    if issues:
        raise ConfigValidationError(issues)

    lattice, scaled = lattice_start(config.start, config.resolution_n)
    validated = ValidatedConfig(
        config=config,
        lattice_start=lattice,
        scaled_start=scaled,
        steps=step_count(config.resolution_n, config.horizon_t),
    )
    logger.debug(f"Validated config: d={config.dimension} n={config.resolution_n} K={validated.steps}")
    return validated


def with_overrides(validated: ValidatedConfig, **changes: Any) -> ValidatedConfig:
    """
    Re-validate a config with some top-level keys replaced.

    Used by the verification suites to derive their runs from the user config.
    """
    data = validated.config.model_dump(mode="json", exclude_none=True)
    data.update(changes)
    return validate_config(data)
