"""Application configuration using Pydantic settings."""

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Runtime settings loaded from environment variables (prefix ``MI_GUARD_``)."""

    # Artifacts
    output_dir: Path = Path("runs")

    # Application
    log_level: str = "INFO"

    # Sampling attack: records perturbed and queried per vectorised batch
    sampling_chunk: int = Field(64, ge=1)

    model_config = SettingsConfigDict(
        env_prefix="MI_GUARD_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
    )


settings = Settings()
