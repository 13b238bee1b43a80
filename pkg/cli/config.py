"""Command-line configuration via environment variables."""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Reads ``SLAS_*`` variables from the environment or a ``.env`` file."""

    model_config = SettingsConfigDict(
        env_prefix="SLAS_", env_file=".env", env_file_encoding="utf-8"
    )

    # ─── Output ───────────────────────────────────────────────────────────────
    out_dir: Path = Path("slas-out")

    # ─── Logging ──────────────────────────────────────────────────────────────
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"

    # ─── Monte Carlo ──────────────────────────────────────────────────────────
    workers: int = Field(1, ge=1)


@lru_cache
def get_settings() -> Settings:
    return Settings()
