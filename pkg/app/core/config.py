import os
from typing import List

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """
    Engine-wide settings and configuration.
    Values can be overridden by environment variables prefixed with SKEWSIM_.
    """
    # Application Settings
    APP_NAME: str = "skewsim"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Engine Settings
    DEFAULT_THREADS: int = Field(default_factory=lambda: os.cpu_count() or 1)
    MAX_BATCH_PATHS: int = 1024
    BATCH_CELL_BUDGET: int = 4_000_000  # paths x grid points held per batch
    STREAM_BATCH_PATHS: int = 8192  # paths per batch when only grid snapshots are kept
    UNIFORM_CHUNK_STEPS: int = 1024
    UNIFORM_CHUNK_CELLS: int = 2_000_000  # uniforms drawn per chunk, all paths of a batch

    # Oracle Settings
    DP_MAX_STEPS_2D: int = 512
    DP_STATE_BUDGET: int = 50_000_000

    # Statistics Settings
    DKW_CONFIDENCE: float = 0.99
    MIN_EFFECTIVE_SAMPLE_SIZE: float = 10.0

    # Verification Settings
    PATHWISE_RUNS: int = 100
    ONE_STEP_CASES: int = 100
    SKEW_LAW_B1_VALUES: List[float] = [-1.0, -0.5, 0.0, 0.5, 1.0]
    REFLECTION_PROBE_TIMES: List[float] = [0.25, 1.0, 4.0]
    REFLECTION_TOLERANCE: float = 0.02
    GIRSANOV_DEFAULT_DRIFT: float = 0.3
    UNIQUENESS_RESOLUTIONS: List[int] = [1000, 10000]
    UNIQUENESS_DP_RESOLUTION: int = 256
    DISCRETIZATION_ALLOWANCE: float = 0.01
    REFERENCE_LAW_TOLERANCE: float = 0.01
    SIGN_RATIO_TOLERANCE: float = 0.005

    # Collision Settings
    COLLISION_GRID_RADIUS: float = 5.0
    COLLISION_GRID_POINTS: int = 41

    # Output Settings
    CSV_SIGNIFICANT_DIGITS: int = 17

    class Config:
        env_file = ".env"
        env_prefix = "SKEWSIM_"


settings = Settings()
