"""In-memory domain objects produced and consumed by the services."""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from app.core.fields import Coefficient
from app.schemas.schemas import SimConfig
from app.utils.lattice import grid_index


@dataclass(frozen=True)
class ValidatedConfig:
    """A SimConfig that passed validate_config, with its derived lattice quantities."""
    config: SimConfig
    lattice_start: Tuple[int, ...]
    scaled_start: Tuple[float, ...]
    steps: int  # K = ceil(n T)

    @property
    def dimension(self) -> int:
        return self.config.dimension

    @property
    def resolution(self) -> int:
        return self.config.resolution_n

    @property
    def horizon(self) -> float:
        return self.config.horizon_t


@dataclass(frozen=True)
class BetaDecomposition:
    bar: int  # even
    hat: float  # in [-1, 1]


@dataclass(frozen=True, eq=False)
class StepLaw:
    """
    One-step law on the hyperplane: deterministic even shift plus an
    independent +/-1 step per coordinate. probs[i] = (p_{i,1}, p_{i,-1}).
    """
    shift: np.ndarray
    probs: np.ndarray

    def mean(self) -> np.ndarray:
        return self.shift + self.probs[:, 0] - self.probs[:, 1]


@dataclass(eq=False)
class LatticeRun:
    """
    One realization of the skew chain with its coupled processes.

    X, W: (K+1, d) int64. L, Z, Zstar: (K+1,) int64.
    M: (K, d) float, NaN on steps off the hyperplane; None unless diagnostics were recorded.
    """
    X: np.ndarray
    W: np.ndarray
    L: np.ndarray
    Z: np.ndarray
    Zstar: np.ndarray
    M: Optional[np.ndarray]
    resolution: int
    path_index: int = 0

    @property
    def start(self) -> np.ndarray:
        return self.X[0]

    @property
    def U(self) -> np.ndarray:
        return self.X[:, 0]

    @property
    def Y(self) -> np.ndarray:
        return self.X[:, 1:]

    @property
    def steps(self) -> int:
        return int(self.X.shape[0] - 1)

    @property
    def on_surface(self) -> np.ndarray:
        """1{U_i = 0} for i < K."""
        return self.X[:-1, 0] == 0


@dataclass(eq=False)
class ScaledPath:
    """
    Diffusion-rescaled processes on the grid t_k = k / n, piecewise constant
    in between. remainder is eps^n(t_k), present only when computed.
    """
    times: np.ndarray
    X: np.ndarray
    W: np.ndarray
    L: np.ndarray
    Z: np.ndarray
    Zstar: np.ndarray
    resolution: int
    horizon: float
    remainder: Optional[np.ndarray] = None

    @property
    def U(self) -> np.ndarray:
        return self.X[:, 0]

    @property
    def Y(self) -> np.ndarray:
        return self.X[:, 1:]

    @property
    def start(self) -> np.ndarray:
        return self.X[0]

    @property
    def dt(self) -> float:
        return 1.0 / self.resolution

    def index_at(self, t: float) -> int:
        return min(grid_index(self.resolution, t), self.X.shape[0] - 1)

    def value_at(self, t: float) -> np.ndarray:
        return self.X[self.index_at(t)]


@dataclass(frozen=True, eq=False)
class ReflectedPair:
    S: np.ndarray
    V: np.ndarray


@dataclass(frozen=True, eq=False)
class WeightedSample:
    path: ScaledPath
    weight: float


@dataclass(frozen=True)
class WeightedEstimate:
    estimate: float
    stderr: float
    effective_sample_size: float


@dataclass(eq=False)
class LatticeLaw:
    """Exact law of the chain after `steps` steps: lattice states (N, d) with masses (N,)."""
    states: np.ndarray
    mass: np.ndarray
    steps: int
    resolution: int

    @property
    def dimension(self) -> int:
        return int(self.states.shape[1])

    def total_mass(self) -> float:
        return float(self.mass.sum())

    def as_dict(self) -> Dict[Tuple[int, ...], float]:
        return {tuple(int(v) for v in state): float(p) for state, p in zip(self.states, self.mass)}

    def marginal(self, coordinate: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        """
        Marginal of one coordinate in rescaled units.

        Returns:
            tuple: (sorted support points / sqrt(n), masses)
        """
        values, inverse = np.unique(self.states[:, coordinate], return_inverse=True)
        masses = np.zeros(values.shape[0])
        np.add.at(masses, inverse, self.mass)
        return values / np.sqrt(self.resolution), masses


@dataclass(eq=False)
class EmpiricalLaw:
    """Sorted sample values per coordinate, shape (d, m)."""
    values: np.ndarray

    @property
    def size(self) -> int:
        return int(self.values.shape[1])

    def coordinate(self, index: int = 0) -> np.ndarray:
        return self.values[index]

    def cdf(self, x: np.ndarray, coordinate: int = 0) -> np.ndarray:
        sample = self.values[coordinate]
        return np.searchsorted(sample, np.asarray(x, dtype=np.float64), side="right") / sample.shape[0]


@dataclass(frozen=True)
class CollisionModel:
    """Particle drifts k1, k2 and collision coefficients zeta1, zeta2, eta1, eta2 on R^2."""
    k1: Coefficient
    k2: Coefficient
    zeta1: Coefficient
    zeta2: Coefficient
    eta1: Coefficient
    eta2: Coefficient


@dataclass(frozen=True)
class CollisionCoefficients:
    zeta: float
    eta: float
    zeta_bar: float
    eta_bar: float
    alpha: float
    beta1: float
    beta2: float


@dataclass(frozen=True, eq=False)
class SkewForm:
    """
    The collision system written as a d = 2 skew equation in the state (Y, U):
    field b(u) = (b_1(u), b_2(u)) on {Y = 0} and drift a(y, u).
    """
    field: object
    drift: object
    a1: Callable[[np.ndarray, np.ndarray], np.ndarray]
    a2: Callable[[np.ndarray, np.ndarray], np.ndarray]
    b1: Callable[[np.ndarray], np.ndarray]
    b2: Callable[[np.ndarray], np.ndarray]


@dataclass(eq=False)
class ParticlePath:
    """Rescaled two-particle path with its collision accounting."""
    times: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    L: np.ndarray
    L_plus: np.ndarray
    L_minus: np.ndarray
    contribution1: np.ndarray  # local-time displacement of particle 1
    contribution2: np.ndarray
    driver_gap1: float  # max |lattice increment - compensated driver increment|, particle 1
    driver_gap2: float


@dataclass(eq=False)
class EnsembleResult:
    """
    Per-path summaries of an ensemble, indexed by path.

    terminal, terminal_W: (m, d) rescaled values at floor(n T).
    local_time: (m,) rescaled L at floor(n T). probes: (m, P) rescaled L at probe times.
    log_weights: (m,) Girsanov log-weights (zeros without drift).
    """
    resolution: int
    horizon: float
    steps: int
    terminal: np.ndarray
    terminal_W: np.ndarray
    local_time: np.ndarray
    probes: np.ndarray
    probe_times: Tuple[float, ...]
    log_weights: np.ndarray
    identity_failures: int = 0
    max_martingale_increment: float = 0.0
    max_remainder_sq: Optional[np.ndarray] = None
    max_randomization_gap_sq: Optional[np.ndarray] = None
    records: List[object] = field(default_factory=list)

    @property
    def size(self) -> int:
        return int(self.terminal.shape[0])

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


@dataclass(eq=False)
class ChainBatch:
    """Stacked lattice runs for consecutive path indices, leading axis = path."""
    X: np.ndarray
    W: np.ndarray
    L: np.ndarray
    Z: np.ndarray
    Zstar: np.ndarray
    M: Optional[np.ndarray]
    resolution: int
    first_index: int = 0

    @property
    def size(self) -> int:
        return int(self.X.shape[0])

    def run(self, row: int) -> LatticeRun:
        return LatticeRun(
            X=self.X[row],
            W=self.W[row],
            L=self.L[row],
            Z=self.Z[row],
            Zstar=self.Zstar[row],
            M=None if self.M is None else self.M[row],
            resolution=self.resolution,
            path_index=self.first_index + row,
        )


@dataclass(eq=False)
class StreamedBatch:
    """
    Lattice values of a batch at selected grid indices only.

    X_at: (B, R, d), W_at: (B, R, d), L_at: (B, R) at record_steps;
    log_weights: (B,) accumulated Girsanov log-weights.
    """
    X_at: np.ndarray
    W_at: np.ndarray
    L_at: np.ndarray
    log_weights: np.ndarray
    record_steps: Tuple[int, ...]
    resolution: int

    @property
    def size(self) -> int:
        return int(self.X_at.shape[0])

    def column(self, k: int) -> int:
        return self.record_steps.index(k)


@dataclass(eq=False)
class ParticleRecord:
    """Per-path summary of a two-particle run; path is kept only when requested."""
    path_index: int
    terminal: np.ndarray  # (X1, X2) at floor(n T)
    terminal_local_time: float
    terminal_L_plus: float
    terminal_L_minus: float
    split_gap: float  # max_t |L_plus + L_minus - L|
    max_contribution: float  # max_t of |local-time displacement| over both particles
    min_gap: float  # min_t (X1 - X2)
    sign_changes: bool
    driver_gap1: float
    driver_gap2: float
    round_trip_gap: float  # max |(X1 + X2, X1 - X2) - (U, Y)|
    path: Optional[ParticlePath] = None
