"""
Two-particle skew-elastic collision model.

The particles (X1, X2) are simulated through the d = 2 skew engine in the
state (Y, U) = (X1 - X2, X1 + X2): coordinate 1 is the skew coordinate Y,
coordinate 2 is U. Each particle carries 1/sqrt(2) diffusion, so the engine
runs with unit diffusion and all scaling lives in the transforms below.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import ErrorCode, SkewSimError
from app.core.fields import as_points, build_coefficient
from app.models.models import (
    ChainBatch,
    CollisionCoefficients,
    CollisionModel,
    EnsembleResult,
    ParticlePath,
    ParticleRecord,
    SkewForm,
    ValidatedConfig,
)
from app.schemas.schemas import CollisionSpec
from app.services.config_service import with_overrides
from app.services.ensemble_service import run_ensemble
from app.services.skew_chain_service import compensated_driver
from app.utils.lattice import grid_index

logger = logging.getLogger(__name__)


def psi(u: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """psi(u, y) = ((u + y) / 2, (u - y) / 2), recovering (x1, x2) from (x1 + x2, x1 - x2)."""
    return (u + y) / 2.0, (u - y) / 2.0


def build_model(spec: CollisionSpec) -> CollisionModel:
    """Evaluable model for a validated collision section."""
    return CollisionModel(
        k1=build_coefficient(spec.k1),
        k2=build_coefficient(spec.k2),
        zeta1=build_coefficient(spec.zeta1),
        zeta2=build_coefficient(spec.zeta2),
        eta1=build_coefficient(spec.eta1),
        eta2=build_coefficient(spec.eta2),
    )


def coefficient_arrays(model: CollisionModel, points: np.ndarray) -> dict:
    """
    The seven derived coefficients at an (N, 2) array of particle positions.

    Raises:
        SkewSimError: CONSTRAINT_VIOLATION where zeta < 0, eta < 0 or zeta + eta = 0
    """
    points = as_points(points, 2)
    zeta1 = model.zeta1.evaluate(points)
    zeta2 = model.zeta2.evaluate(points)
    eta1 = model.eta1.evaluate(points)
    eta2 = model.eta2.evaluate(points)

    zeta = 1.0 + (zeta1 - zeta2) / 2.0
    eta = 1.0 - (eta1 - eta2) / 2.0
    bad = (zeta < 0) | (eta < 0) | (zeta + eta == 0)
    if np.any(bad):
        where = points[np.flatnonzero(bad)[0]]
        raise SkewSimError(
            ErrorCode.CONSTRAINT_VIOLATION,
            f"collision constraints fail at x=({where[0]:.6g}, {where[1]:.6g})",
        )

    zeta_bar = 1.0 - (zeta1 + zeta2) / 2.0
    eta_bar = 1.0 - (eta1 + eta2) / 2.0
    alpha = eta / (eta + zeta)
    return {
        "zeta": zeta,
        "eta": eta,
        "zeta_bar": zeta_bar,
        "eta_bar": eta_bar,
        "alpha": alpha,
        "beta1": 2.0 * alpha - 1.0,
        "beta2": zeta_bar * alpha + eta_bar * (1.0 - alpha),
    }


def derive_coefficients(model: CollisionModel, x: Sequence[float]) -> CollisionCoefficients:
    """
    (zeta, eta, zeta_bar, eta_bar, alpha, beta1, beta2) at a single point.

    Raises:
        SkewSimError: CONSTRAINT_VIOLATION
    """
    values = coefficient_arrays(model, np.asarray(x, dtype=np.float64).reshape(1, 2))
    return CollisionCoefficients(**{name: float(array[0]) for name, array in values.items()})


def validate_model(model: CollisionModel, radius: Optional[float] = None, points: Optional[int] = None) -> None:
    """
    Check the collision constraints on a square validation grid.

    Raises:
        SkewSimError: CONSTRAINT_VIOLATION
    """
    radius = settings.COLLISION_GRID_RADIUS if radius is None else radius
    points = settings.COLLISION_GRID_POINTS if points is None else points
    axis = np.linspace(-radius, radius, points)
    grid = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    coefficient_arrays(model, grid)


@dataclass(frozen=True)
class SkewFormField:
    """b(u) = (beta1, beta2) at psi(u, 0), evaluated on (N, 1) arrays of u."""
    model: CollisionModel
    dimension: int = 2
    input_dimension: int = 1

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        u = as_points(points, 1)[:, 0]
        values = coefficient_arrays(self.model, np.stack(psi(u, np.zeros_like(u)), axis=1))
        return np.stack([values["beta1"], values["beta2"]], axis=1)

    def b1(self, u: np.ndarray) -> np.ndarray:
        return self.evaluate(np.asarray(u, dtype=np.float64).reshape(-1, 1))[:, 0]

    def b2(self, u: np.ndarray) -> np.ndarray:
        return self.evaluate(np.asarray(u, dtype=np.float64).reshape(-1, 1))[:, 1]

    def sup_norm(self) -> float:
        m = self.model
        zeta_bar = 1.0 + (m.zeta1.bound() + m.zeta2.bound()) / 2.0
        eta_bar = 1.0 + (m.eta1.bound() + m.eta2.bound()) / 2.0
        return math.sqrt(1.0 + max(zeta_bar, eta_bar) ** 2)


@dataclass(frozen=True)
class SkewFormDrift:
    """a(y, u) = ((k1 - k2), (k1 + k2)) at psi(u, y), evaluated on (N, 2) arrays of (y, u)."""
    model: CollisionModel
    dimension: int = 2
    input_dimension: int = 2

    @property
    def is_zero(self) -> bool:
        return self.model.k1.is_zero and self.model.k2.is_zero

    def _parts(self, y: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x = np.stack(psi(u, y), axis=1)
        return self.model.k1.evaluate(x), self.model.k2.evaluate(x)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = as_points(points, 2)
        k1, k2 = self._parts(points[:, 0], points[:, 1])
        return np.stack([k1 - k2, k1 + k2], axis=1)

    def a1(self, y: np.ndarray, u: np.ndarray) -> np.ndarray:
        k1, k2 = self._parts(np.asarray(y, dtype=np.float64), np.asarray(u, dtype=np.float64))
        return k1 - k2

    def a2(self, y: np.ndarray, u: np.ndarray) -> np.ndarray:
        k1, k2 = self._parts(np.asarray(y, dtype=np.float64), np.asarray(u, dtype=np.float64))
        return k1 + k2

    def sup_norm(self) -> float:
        return math.sqrt(2.0) * (self.model.k1.bound() + self.model.k2.bound())


def to_skew_form(model: CollisionModel) -> SkewForm:
    """
    The model as a d = 2 skew equation in the state (Y, U).

    Raises:
        SkewSimError: CONSTRAINT_VIOLATION on the validation grid
    """
    validate_model(model)
    field = SkewFormField(model)
    drift = SkewFormDrift(model)
    return SkewForm(field=field, drift=drift, a1=drift.a1, a2=drift.a2, b1=field.b1, b2=field.b2)


def split_local_times(L: np.ndarray, alpha: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    L_plus = sum alpha dL, L_minus = sum (1 - alpha) dL.

    Args:
        L: Nondecreasing local time on the grid, length K+1
        alpha: alpha at the left end of every step, length K

    Returns:
        tuple: (L_plus, L_minus), both starting at 0
    """
    L = np.asarray(L, dtype=np.float64)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (L.shape[0] - 1,))
    dL = np.diff(L)
    plus = np.concatenate([[0.0], np.cumsum(alpha * dL)])
    minus = np.concatenate([[0.0], np.cumsum((1.0 - alpha) * dL)])
    return plus, minus


@dataclass(frozen=True)
class ParticleReducer:
    """Turns every engine run of a batch into a ParticleRecord."""
    model: CollisionModel
    field: SkewFormField
    horizon: float
    keep_paths: int = 0

    def __call__(self, batch: ChainBatch) -> List[ParticleRecord]:
        return [self.record(batch, row) for row in range(batch.size)]

    def record(self, batch: ChainBatch, row: int) -> ParticleRecord:
        run = batch.run(row)
        n = batch.resolution
        root_n = math.sqrt(n)
        last = min(grid_index(n, self.horizon), run.steps)

        # Engine coordinate 1 is Y, coordinate 2 is U
        Y_lattice = run.X[:, 0]
        U_lattice = run.X[:, 1]
        Y = Y_lattice / root_n
        U = U_lattice / root_n
        X1, X2 = psi(U, Y)
        W1 = run.W[:, 0] / root_n
        W2 = run.W[:, 1] / root_n
        L = run.L / root_n

        # Coefficients at psi(u, 0) on every visit of {Y = 0}
        visits = run.on_surface
        alpha = np.zeros(run.steps)
        beta1 = np.zeros(run.steps)
        beta2 = np.zeros(run.steps)
        if visits.any():
            u = U[:-1][visits]
            values = coefficient_arrays(self.model, np.stack(psi(u, np.zeros_like(u)), axis=1))
            alpha[visits] = values["alpha"]
            beta1[visits] = values["beta1"]
            beta2[visits] = values["beta2"]

        L_plus, L_minus = split_local_times(L, alpha)
        dL = np.diff(L)
        contribution1 = np.concatenate([[0.0], np.cumsum((beta2 + beta1) / 2.0 * dL)])
        contribution2 = np.concatenate([[0.0], np.cumsum((beta2 - beta1) / 2.0 * dL)])

        driver = compensated_driver(run, self.field)
        driver_Y, driver_U = driver[:, 0], driver[:, 1]
        gap1 = np.diff((U_lattice + Y_lattice) / 2.0) - np.diff((driver_U + driver_Y) / 2.0)
        gap2 = np.diff((U_lattice - Y_lattice) / 2.0) - np.diff((driver_U - driver_Y) / 2.0)

        path = None
        if run.path_index < self.keep_paths:
            path = ParticlePath(
                times=np.arange(run.steps + 1) / n,
                X1=X1,
                X2=X2,
                B1=(W2 + W1) / math.sqrt(2.0),
                B2=(W2 - W1) / math.sqrt(2.0),
                L=L,
                L_plus=L_plus,
                L_minus=L_minus,
                contribution1=contribution1,
                contribution2=contribution2,
                driver_gap1=float(np.max(np.abs(gap1), initial=0.0)) / root_n,
                driver_gap2=float(np.max(np.abs(gap2), initial=0.0)) / root_n,
            )

        return ParticleRecord(
            path_index=run.path_index,
            terminal=np.array([X1[last], X2[last]]),
            terminal_local_time=float(L[last]),
            terminal_L_plus=float(L_plus[last]),
            terminal_L_minus=float(L_minus[last]),
            split_gap=float(np.max(np.abs(L_plus + L_minus - L))),
            max_contribution=float(max(np.max(np.abs(contribution1)), np.max(np.abs(contribution2)))),
            min_gap=float(np.min(X1 - X2)),
            sign_changes=bool(Y.min() < 0 < Y.max()),
            driver_gap1=float(np.max(np.abs(gap1), initial=0.0)) / root_n,
            driver_gap2=float(np.max(np.abs(gap2), initial=0.0)) / root_n,
            round_trip_gap=float(max(np.max(np.abs(X1 + X2 - U)), np.max(np.abs(X1 - X2 - Y)))),
            path=path,
        )


def engine_config(validated: ValidatedConfig, x0: Sequence[float]) -> ValidatedConfig:
    """Config of the engine run in (Y, U) coordinates for particles started at x0."""
    x1, x2 = float(x0[0]), float(x0[1])
    return with_overrides(validated, start=[x1 - x2, x1 + x2])


def simulate_particles(
    model: CollisionModel,
    x0: Sequence[float],
    validated: ValidatedConfig,
    threads: Optional[int] = None,
    keep_paths: int = 0,
) -> Tuple[EnsembleResult, List[ParticleRecord]]:
    """
    Simulate the two-particle system through the skew engine.

    Args:
        model: Collision model
        x0: Particle start (x1, x2)
        validated: Validated d = 2 config; its start and field are replaced
        threads: Worker processes
        keep_paths: Number of leading paths returned in full

    Returns:
        tuple: (engine ensemble in (Y, U) coordinates, per-path particle records)

    Raises:
        SkewSimError: CONSTRAINT_VIOLATION, SHAPE_MISMATCH
    """
    if validated.dimension != 2:
        raise SkewSimError(ErrorCode.SHAPE_MISMATCH, "the collision model needs dimension 2")
    form = to_skew_form(model)
    engine = engine_config(validated, x0)
    reducer = ParticleReducer(model=model, field=form.field, horizon=engine.horizon, keep_paths=keep_paths)

    logger.info(f"Particles from x0=({x0[0]}, {x0[1]}): engine start {engine.lattice_start}")
    ensemble = run_ensemble(engine, threads=threads, field=form.field, drift=form.drift, reducer=reducer)
    return ensemble, list(ensemble.records)
