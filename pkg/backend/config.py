"""
Runtime settings and logging setup

Settings come from the environment (optionally a .env file) and are read once.
"""

import logging
import os
from typing import Optional

import coloredlogs
from dotenv import load_dotenv
from pydantic import BaseModel, Field

load_dotenv()

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"

_settings: Optional["Settings"] = None


class Settings(BaseModel):
    workers: int = Field(default=1, ge=1)
    enumeration_cap: int = Field(default=10**6, ge=1)
    log_level: str = "INFO"
    show_progress: bool = True
    test_set_size: int = Field(default=10**5, ge=1)


def _env_flag(name: str, default: str) -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


def get_settings() -> Settings:
    """Build the settings from the environment on first use"""
    global _settings
    if _settings is None:
        _settings = Settings(
            workers=int(os.getenv("LPO_WORKERS", "1")),
            enumeration_cap=int(os.getenv("LPO_ENUMERATION_CAP", str(10**6))),
            log_level=os.getenv("LPO_LOG_LEVEL", "INFO").upper(),
            show_progress=_env_flag("LPO_SHOW_PROGRESS", "true"),
            test_set_size=int(os.getenv("LPO_TEST_SET_SIZE", str(10**5))),
        )
    return _settings


def reset_settings() -> None:
    """Forget cached settings so the next call re-reads the environment."""
    global _settings
    _settings = None


def configure_logging(level: Optional[str] = None) -> None:
    coloredlogs.install(level=level or get_settings().log_level, fmt=LOG_FORMAT)
    # joblib workers are noisy at INFO
    logging.getLogger("joblib").setLevel(logging.WARNING)
