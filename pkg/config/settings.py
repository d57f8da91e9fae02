"""
Configuration settings for the heavy-traffic toolkit.
This module loads and validates environment variables.
"""

from typing import Optional

from dotenv import load_dotenv
from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables from .env file
load_dotenv()

LOG_LEVELS = ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL")


class Settings(BaseSettings):
    """Application settings loaded from HTQ_* environment variables."""

    model_config = SettingsConfigDict(env_prefix="HTQ_", env_file=".env", case_sensitive=True, extra="ignore")

    # Worker pool
    THREADS: Optional[int] = None

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FILE: str = "logs/htq.log"

    # Runs
    DEFAULT_SEED: int = 0

    @field_validator("THREADS")
    @classmethod
    def validate_threads(cls, v):
        """Worker cap must be positive."""
        if v is not None and v < 1:
            raise ValueError("HTQ_THREADS must be at least 1")
        return v

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v):
        """Validate against loguru level names."""
        level = v.upper()
        if level not in LOG_LEVELS:
            raise ValueError(f"HTQ_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}")
        return level


# Create settings instance
settings = Settings()
