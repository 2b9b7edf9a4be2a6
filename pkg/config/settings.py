from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Output
    output_dir: Path = Path("results")  # TRR_OUTPUT_DIR overrides

    # Logging
    log_level: str = "INFO"
    log_json: bool = False

    # Experiments
    sweep_workers: int = 1
    success_threshold: float = 1e-2  # RE at or below counts as exact recovery
    default_repetitions: int = 10

    # Numerical rank
    rank_tolerance: float = 1e-8  # relative to the largest singular value

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="TRR_",
        # Allow extra fields for future expansion
        extra="ignore",
    )


settings = Settings()
