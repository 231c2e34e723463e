from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from app.core.errors import ErrorCode


# Field Schemas
class FamilyName(str, Enum):
    CONSTANT = "Constant"
    SIGMOID_AFFINE = "SigmoidAffine"
    ZERO = "Zero"
    RANK = "Rank"


class FieldParams(BaseModel):
    value: Optional[List[float]] = None
    offset: Optional[List[float]] = None
    amplitude: Optional[List[float]] = None
    frequency: Optional[List[float]] = None

    class Config:
        extra = "forbid"
        frozen = True


class FieldSpec(BaseModel):
    """Local-time coefficient b on the hyperplane {x_1 = 0}."""
    family: FamilyName
    params: FieldParams = FieldParams()

    class Config:
        extra = "forbid"
        frozen = True


class DriftSpec(FieldSpec):
    """Bounded drift a on the whole space; Zero by default."""
    family: FamilyName = FamilyName.ZERO


# Collision Schemas
class CoefficientParams(BaseModel):
    value: Optional[float] = None
    offset: Optional[float] = None
    amplitude: Optional[float] = None
    frequency: Optional[List[float]] = None  # length 2, acts on (x1, x2)
    below: Optional[float] = None  # Rank: value on {x1 <= x2}
    above: Optional[float] = None  # Rank: value on {x1 > x2}

    class Config:
        extra = "forbid"
        frozen = True


class CoefficientSpec(BaseModel):
    family: FamilyName
    params: CoefficientParams = CoefficientParams()

    class Config:
        extra = "forbid"
        frozen = True


class CollisionSpec(BaseModel):
    k1: CoefficientSpec = CoefficientSpec(family=FamilyName.ZERO)
    k2: CoefficientSpec = CoefficientSpec(family=FamilyName.ZERO)
    zeta1: CoefficientSpec
    zeta2: CoefficientSpec
    eta1: CoefficientSpec
    eta2: CoefficientSpec

    class Config:
        extra = "forbid"
        frozen = True


# Config Schemas
class OutputOptions(BaseModel):
    dir: str = "out"
    emit_paths: bool = False
    emit_summary: bool = True

    class Config:
        extra = "forbid"
        frozen = True


class SimConfig(BaseModel):
    dimension: int
    resolution_n: int
    horizon_t: float
    paths_m: int
    start: List[float]
    field: FieldSpec
    drift: DriftSpec = DriftSpec()
    seed: Optional[int] = None
    output: OutputOptions = OutputOptions()
    collision: Optional[CollisionSpec] = None

    class Config:
        extra = "forbid"
        frozen = True


class ConfigIssue(BaseModel):
    code: ErrorCode
    location: str
    message: str

    class Config:
        frozen = True


# Result Schemas
class CheckResult(BaseModel):
    name: str
    value: Optional[float] = None
    threshold: Optional[float] = None
    passed: bool
    detail: Optional[str] = None


class SuiteResult(BaseModel):
    suite: str
    passed: bool
    checks: List[CheckResult] = []
    metrics: Dict[str, Any] = {}


class ConvergenceRow(BaseModel):
    resolution_n: int
    ks_to_previous: Optional[float] = None
    ks_to_reference: Optional[float] = None
    dkw_band: float
    mean_terminal: float
    mean_local_time: float


class RunManifest(BaseModel):
    """
    Everything needed to reproduce and audit one CLI invocation.
    Timings are written to a sidecar file so the manifest itself stays
    byte-identical across re-runs.
    """
    command: str
    code_version: str
    seed: Optional[int] = None
    config: Dict[str, Any]
    results: Dict[str, Any] = {}
    passed: bool = True
    files: List[str] = []
    timings: Dict[str, float] = Field(default_factory=dict, exclude=True)
