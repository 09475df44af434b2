"""
Configuration settings for the speech regularization toolkit
"""
import os
from functools import lru_cache
from typing import List, Union

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings with environment variable support (prefix SPEECHREG_)"""

    # Application Info
    app_name: str = Field(default="speechreg")
    app_version: str = Field(default="1.0.0")
    debug: bool = Field(default=False)

    # Workers
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)

    # Audio
    sample_rate: int = Field(default=16000, gt=0)

    # Language model / decoding defaults
    lm_oov_log10: float = Field(default=-7.0, le=0.0)
    decode_beam_width: int = Field(default=100, ge=1)
    decode_alpha: float = Field(default=1.0, ge=0.0)
    decode_beta: float = Field(default=1.5)

    # Reproducibility
    default_seed: int = Field(default=0, ge=0)

    # Alphabet used when a manifest does not ship its own alphabet.txt
    default_alphabet: Union[List[str], str] = Field(
        default=list("abcdefghijklmnopqrstuvwxyz' ")
    )

    @field_validator("default_alphabet", mode="before")
    @classmethod
    def parse_default_alphabet(cls, v):
        if isinstance(v, str):
            return [symbol for symbol in v.split(",") if symbol]
        return v

    # Logging
    log_level: str = Field(default="INFO")
    log_format: str = Field(default="json")

    @field_validator("log_format")
    @classmethod
    def validate_log_format(cls, v: str) -> str:
        if v not in ("json", "console"):
            raise ValueError("log_format must be 'json' or 'console'")
        return v

    model_config = SettingsConfigDict(
        env_prefix="SPEECHREG_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()


# Global settings instance
settings = get_settings()
