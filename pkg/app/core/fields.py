"""Vector fields b (on the hyperplane) and a (on the whole space) used by the engine."""
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from app.core.errors import ErrorCode, SkewSimError
from app.schemas.schemas import CoefficientSpec, FamilyName, FieldSpec


class VectorField(Protocol):
    """
    Anything the engine can evaluate: maps an (N, m) array of points to an
    (N, d) array of values. Fields on the hyperplane take m = d - 1, drifts
    take m = d.
    """
    dimension: int

    def evaluate(self, points: np.ndarray) -> np.ndarray: ...

    def sup_norm(self) -> float: ...


@dataclass(frozen=True, eq=False)
class ParametricField:
    """
    Coordinate i evaluates to offset_i + amplitude_i * tanh(frequency . point).

    Constant and Zero are the special cases amplitude = 0 and offset = amplitude = 0.
    """
    family: FamilyName
    offset: np.ndarray
    amplitude: np.ndarray
    frequency: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.offset.shape[0])

    @property
    def input_dimension(self) -> int:
        return int(self.frequency.shape[0])

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.offset) or np.any(self.amplitude))

    @property
    def is_constant(self) -> bool:
        return not np.any(self.amplitude) or not np.any(self.frequency)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = as_points(points, self.input_dimension)
        if self.is_constant:
            return np.broadcast_to(self.offset, (points.shape[0], self.dimension)).copy()
        phase = np.tanh(points @ self.frequency)
        return self.offset[None, :] + self.amplitude[None, :] * phase[:, None]

    def __call__(self, point: Sequence[float]) -> np.ndarray:
        return self.evaluate(np.asarray(point, dtype=np.float64).reshape(1, -1))[0]

    def lipschitz_constants(self) -> np.ndarray:
        """Per-coordinate Lipschitz constants |A_i| * ||w||."""
        return np.abs(self.amplitude) * float(np.linalg.norm(self.frequency))

    def lipschitz_constant(self) -> float:
        """Lipschitz constant of the whole vector: ||A|| * ||w||."""
        return float(np.linalg.norm(self.amplitude) * np.linalg.norm(self.frequency))

    def sup_norm(self) -> float:
        return float(np.linalg.norm(np.abs(self.offset) + np.abs(self.amplitude)))

    def b1_bound(self) -> float:
        """Bound |c_1| + |A_1| on the first coordinate."""
        return float(abs(self.offset[0]) + abs(self.amplitude[0]))


@dataclass(frozen=True, eq=False)
class CallableField:
    """
    Programmatic field wrapping a vectorised callable.

    The callable must be picklable (a module-level function or an object with
    __call__) when ensembles run on more than one worker.
    """
    function: Callable[[np.ndarray], np.ndarray]
    dimension: int
    input_dimension: int
    bound: float
    lipschitz: Optional[float] = None

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = as_points(points, self.input_dimension)
        values = np.asarray(self.function(points), dtype=np.float64)
        return values.reshape(points.shape[0], self.dimension)

    def __call__(self, point: Sequence[float]) -> np.ndarray:
        return self.evaluate(np.asarray(point, dtype=np.float64).reshape(1, -1))[0]

    def sup_norm(self) -> float:
        return float(self.bound)


def as_points(points: np.ndarray, input_dimension: int) -> np.ndarray:
    """Coerce to an (N, m) float array; a 1-D input is a single point."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        return points.reshape(1, input_dimension)
    return points


def _vector(values: Optional[Sequence[float]], length: int) -> np.ndarray:
    if values is None:
        return np.zeros(length)
    return np.asarray(values, dtype=np.float64)


def build_field(spec: FieldSpec, dimension: int, input_dimension: Optional[int] = None) -> ParametricField:
    """
    Build the evaluable field for a parsed spec.

    Args:
        spec: Field or drift spec (shapes already validated)
        dimension: Output dimension d
        input_dimension: Dimension of the argument; d - 1 for b, d for a

    Returns:
        ParametricField
    """
    if input_dimension is None:
        input_dimension = dimension - 1
    params = spec.params
    zeros = np.zeros(dimension)

    if spec.family == FamilyName.ZERO:
        return ParametricField(spec.family, zeros, zeros.copy(), np.zeros(input_dimension))
    if spec.family == FamilyName.CONSTANT:
        return ParametricField(spec.family, _vector(params.value, dimension), zeros, np.zeros(input_dimension))
    if spec.family == FamilyName.SIGMOID_AFFINE:
        return ParametricField(
            spec.family,
            _vector(params.offset, dimension),
            _vector(params.amplitude, dimension),
            _vector(params.frequency, input_dimension),
        )
    raise SkewSimError(ErrorCode.SCHEMA, f"Family {spec.family.value} is not available for vector fields")


def build_drift(spec: FieldSpec, dimension: int) -> ParametricField:
    """Drift fields act on all of R^d."""
    return build_field(spec, dimension, input_dimension=dimension)


def eval_field(spec: FieldSpec, xi: Sequence[float]) -> np.ndarray:
    """
    Evaluate b(0, xi) for a validated field spec.

    Args:
        spec: Validated field spec
        xi: Position inside the hyperplane, length d - 1

    Returns:
        np.ndarray: b(0, xi), length d
    """
    xi = np.asarray(xi, dtype=np.float64).reshape(-1)
    dimension = _spec_dimension(spec, xi.shape[0] + 1)
    return build_field(spec, dimension, input_dimension=xi.shape[0])(xi)


def _spec_dimension(spec: FieldSpec, fallback: int) -> int:
    params = spec.params
    for values in (params.value, params.offset, params.amplitude):
        if values is not None:
            return len(values)
    return fallback


@dataclass(frozen=True)
class Coefficient:
    """
    Scalar coefficient on the particle plane R^2, evaluated on (N, 2) arrays of (x1, x2).

    Rank evaluates to `below` on {x1 <= x2} and `above` on {x1 > x2}.
    """
    family: FamilyName
    value: float = 0.0
    offset: float = 0.0
    amplitude: float = 0.0
    frequency: Sequence[float] = (0.0, 0.0)
    below: float = 0.0
    above: float = 0.0

    @property
    def is_zero(self) -> bool:
        if self.family == FamilyName.ZERO:
            return True
        if self.family == FamilyName.CONSTANT:
            return self.value == 0.0
        if self.family == FamilyName.RANK:
            return self.below == 0.0 and self.above == 0.0
        return self.offset == 0.0 and self.amplitude == 0.0

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = as_points(points, 2)
        size = points.shape[0]
        if self.family == FamilyName.ZERO:
            return np.zeros(size)
        if self.family == FamilyName.CONSTANT:
            return np.full(size, self.value)
        if self.family == FamilyName.RANK:
            return np.where(points[:, 0] > points[:, 1], self.above, self.below)
        return self.offset + self.amplitude * np.tanh(points @ np.asarray(self.frequency, dtype=np.float64))

    def bound(self) -> float:
        """sup |coefficient|."""
        if self.family == FamilyName.CONSTANT:
            return abs(self.value)
        if self.family == FamilyName.RANK:
            return max(abs(self.below), abs(self.above))
        if self.family == FamilyName.SIGMOID_AFFINE:
            return abs(self.offset) + abs(self.amplitude)
        return 0.0


def build_coefficient(spec: CoefficientSpec) -> Coefficient:
    params = spec.params
    if spec.family == FamilyName.CONSTANT:
        return Coefficient(spec.family, value=float(params.value))
    if spec.family == FamilyName.RANK:
        return Coefficient(spec.family, below=float(params.below), above=float(params.above))
    if spec.family == FamilyName.SIGMOID_AFFINE:
        return Coefficient(
            spec.family,
            offset=float(params.offset),
            amplitude=float(params.amplitude),
            frequency=tuple(params.frequency),
        )
    return Coefficient(FamilyName.ZERO)
