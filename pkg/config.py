import os
import sys
import logging
from pathlib import Path
from typing import Optional, Union

from dotenv import load_dotenv
from pydantic import ValidationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from dataio.manifest import describe_errors
from models.settings import ToolConfig
from utils.errors import BevBenchError, ConfigError

load_dotenv()

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "warning": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class Settings:
    LOG_LEVEL: str = os.getenv("BEVBENCH_LOG", "info").lower()
    CONFIG_PATH: Optional[str] = os.getenv("BEVBENCH_CONFIG")
    JOBS: int = int(os.getenv("BEVBENCH_JOBS", "1"))
    HOST: str = os.getenv("BEVBENCH_HOST", "0.0.0.0")
    PORT: int = int(os.getenv("BEVBENCH_PORT", "8000"))

settings = Settings()


def setup_logging(level: Optional[str] = None) -> None:
    name = (level or os.getenv("BEVBENCH_LOG") or settings.LOG_LEVEL).lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(name, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
        force=True,
    )


def parse_tool_config(data: dict, source: str = "<config>") -> ToolConfig:
    try:
        return ToolConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: invalid configuration", describe_errors(e))
    except BevBenchError as e:
        raise ConfigError(f"{source}: invalid configuration", [str(e)])


def load_tool_config(path: Optional[Union[str, Path]] = None) -> ToolConfig:
    """ToolConfig from a TOML file; defaults when no path is given or configured."""
    path = path or settings.CONFIG_PATH
    if not path:
        return ToolConfig()
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: invalid TOML: {e}")
    return parse_tool_config(data, source=str(path))
