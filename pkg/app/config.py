"""Configuration management using pydantic-settings."""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="FEDSIM_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Service metadata
    app_name: str = Field(default="fedftg-sim", description="Application name")
    app_version: str = Field(default="0.1.0", description="Application version")

    # Logging
    log_level: str = Field(default="INFO", description="Logging level")
    log_format: str = Field(
        default="json",
        description="Log line format: 'json' (one object per line) or 'plain'",
        pattern="^(json|plain)$",
    )

    # Execution
    max_workers: int = Field(
        default=4,
        description="Worker threads used when clients run in parallel between barriers",
        ge=1,
        le=64,
    )
    default_output_dir: str = Field(
        default="runs", description="Output directory used when neither config nor --out set one"
    )


# Global settings instance
settings = Settings()
