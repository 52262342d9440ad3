from __future__ import annotations

import configparser
import os
from pathlib import Path

from detector._shared.errors import InvalidConfig

DEFAULT_POWERCAP_ROOT = "/sys/devices/virtual/powercap/intel-rapl"
CONFIG_SECTION = "detector"


def powercap_root() -> Path:
    return Path(os.getenv("RAPL_POWERCAP_ROOT", "") or DEFAULT_POWERCAP_ROOT)


def log_level() -> str:
    return os.getenv("DETECTOR_LOG_LEVEL", "INFO").upper()


def served_model_paths() -> tuple[str, str]:
    return os.getenv("DETECTOR_AD_MODEL", ""), os.getenv("DETECTOR_AR_MODEL", "")


def load_config_file(path: str | Path | None) -> dict[str, str]:
    """Read the ``[detector]`` section of a key-value config file.

    Keys use the long CLI flag spelling with dashes or underscores; both map to
    the underscore form the pydantic models expect.
    """
    if not path:
        return {}
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise InvalidConfig(f"Cannot read config file {path}: {exc.strerror}.", path=str(path)) from exc
    except configparser.Error as exc:
        raise InvalidConfig(f"Config file {path} is malformed.", path=str(path)) from exc
    if not parser.has_section(CONFIG_SECTION):
        return {}
    return {key.replace("-", "_"): value for key, value in parser.items(CONFIG_SECTION)}
