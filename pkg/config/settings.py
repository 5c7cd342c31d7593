from functools import lru_cache
from pathlib import Path
from typing import Literal

from pydantic import model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Toolkit settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="METASTAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Paths
    output_dir: Path = Path("./runs")
    logs_dir: Path = Path("./logs")

    # Logging
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    log_to_file: bool = True

    # Seeding and workers
    default_seed: int = 20240601
    threads: int = 1

    # Simulation budgets
    extinction_event_cap: int = 100_000_000
    exit_event_cap: int = 50_000_000
    aux_jump_cap: int = 50_000_000
    clock_buffer_size: int = 4096
    rebase_threshold: float = 1e-150

    # Numerics
    quad_tol: float = 1e-10
    root_tol: float = 1e-12
    pstar_scan_points: int = 512
    picard_max_iterations: int = 50

    @model_validator(mode="after")
    def validate_budgets(self) -> "Settings":
        """Validate limits that the simulators rely on."""
        if self.threads < 1:
            raise ValueError("METASTAB_THREADS must be >= 1")
        for name in ("extinction_event_cap", "exit_event_cap", "aux_jump_cap", "clock_buffer_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"METASTAB_{name.upper()} must be >= 1")
        if not 0.0 < self.rebase_threshold < 1.0:
            raise ValueError("METASTAB_REBASE_THRESHOLD must be in (0, 1)")
        if not 0.0 < self.quad_tol < 1e-6:
            raise ValueError("METASTAB_QUAD_TOL must be in (0, 1e-6)")
        if not 0.0 < self.root_tol < 1e-6:
            raise ValueError("METASTAB_ROOT_TOL must be in (0, 1e-6)")
        if self.pstar_scan_points < 8:
            raise ValueError("METASTAB_PSTAR_SCAN_POINTS must be >= 8")
        if self.picard_max_iterations < 1:
            raise ValueError("METASTAB_PICARD_MAX_ITERATIONS must be >= 1")
        return self


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
