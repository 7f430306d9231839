from typing import List
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Application
    APP_NAME: str = "AEE Error Laboratory"
    APP_DESCRIPTION: str = "Asymptotic error distribution experiments for the accelerated exponential Euler method"
    APP_VERSION: str = "1.0.0"
    LOG_LEVEL: str = "INFO"

    # Paths
    BASE_DIR: Path = Path(__file__).resolve().parent.parent
    DATA_DIR: Path = BASE_DIR / "data"
    GOLDEN_NOISE_PATH: Path = DATA_DIR / "golden_noise.bin"
    OUTPUT_DIR: Path = Path("results")

    # Execution
    THREADS: int = 1  # replica worker processes; read from AEE_THREADS
    BATCH_SIZE: int = 16  # replicas advanced together by one worker task

    # Pinned experiment defaults
    DEFAULT_N: int = 64
    DEFAULT_RHO_DECAY: float = 2.0
    DEFAULT_BETA: float = 2.0
    DEFAULT_T: float = 1.0
    DEFAULT_M_LIST: List[int] = [8, 16, 32, 64, 128]
    DEFAULT_DISTRIBUTION_M_LIST: List[int] = [16, 64, 256]
    DEFAULT_REFINE: int = 64
    DEFAULT_REPLICAS: int = 2000
    DEFAULT_PROJ_DIM: int = 5
    DEFAULT_IOTA: float = 0.75
    DEFAULT_MASTER_SEED: int = 20240917

    # Acceptance tolerances
    ORDER_BAND: List[float] = [0.85, 1.15]
    MAX_LOG_RESIDUAL: float = 0.15
    SIGNIFICANCE_LEVEL: float = 0.01
    N_STANDARD_ERRORS: float = 3.0
    ORACLE_STEPS: int = 2000

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="AEE_",
        case_sensitive=True,
        env_file_encoding="utf-8",
        extra="ignore",
    )


settings = Settings()
