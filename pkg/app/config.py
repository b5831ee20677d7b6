from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Run store
    DATABASE_URL: str = "sqlite+aiosqlite:///./progtune_runs.db"

    # Where train/ablate/probe write exports and checkpoints when a config does not say
    OUTPUT_DIR: str = "runs"
    EXPORT_FORMAT: Literal["csv", "jsonl"] = "csv"

    LOG_LEVEL: str = "INFO"

    # Experiment defaults
    DEFAULT_SEED: int = 0
    MAX_WORKERS: int = Field(default=1, ge=1)

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


config = Settings()
