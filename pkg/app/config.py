from pydantic_settings import BaseSettings
from typing import List
from functools import lru_cache


class Settings(BaseSettings):
    # Application
    APP_NAME: str = "submap-slam-backend"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False
    ENVIRONMENT: str = "development"
    LOG_LEVEL: str = "INFO"

    # Server
    HOST: str = "0.0.0.0"
    PORT: int = 8000

    # CORS
    ALLOWED_ORIGINS: str = "http://localhost:3000,http://localhost:5173"

    @property
    def cors_origins(self) -> List[str]:
        return [origin.strip() for origin in self.ALLOWED_ORIGINS.split(",")]

    # Output
    OUTPUT_DIR: str = "runs"
    REGISTRATION_WORKERS: int = 4

    # Motion estimation
    TAU_FLOW: float = 0.7  # px
    TAU_STATIC: float = 0.6
    TAU_TURN: float = 5.0  # px of mean |f_x|
    SMOOTHING_SIGMA: float = 2.0  # frames

    # Filtering / partitioning
    TAU_PALX: float = 15.0  # px
    N_MAX: int = 12
    N_OVLP: int = 5
    OMEGA: int = 1
    LOOP_RADIUS: float = 10.0  # m
    LOOP_MIN_GAP: int = 50  # frames

    # Registration
    TAU_CONF: float = 0.5  # confidence quantile
    TAU_IN: float = 0.5
    ANCHOR_WINDOW: int = 3
    IRLS_MAX_ITERS: int = 20

    # Pose graph
    LM_MAX_ITERS: int = 100
    HUBER_FLOOR: float = 1e-3

    # Synthetic worlds
    DEFAULT_SEED: int = 0
    FRAME_RATE: float = 10.0  # Hz

    class Config:
        env_file = ".env"
        case_sensitive = True


@lru_cache()
def get_settings() -> Settings:
    return Settings()


settings = get_settings()
