"""
Preset Loader
Named figure parameter sets and flat key=value config files.
"""
import logging
import os
from typing import Dict, Optional

from dotenv import dotenv_values

from config.config import PRESETS_DIR
from helpers.errors import BadConfigError, InvalidParameterError

logger = logging.getLogger(__name__)

PRESET_SUFFIX = ".env"


def normalize_key(key: str) -> str:
    """'grid-min', 'GRID_MIN' and '--grid-min' all become 'grid_min'."""
    return key.strip().lstrip("-").lower().replace("-", "_")


def _read_values(path: str) -> Dict[str, str]:
    values = {}
    for key, value in dotenv_values(path).items():
        if value is None:
            raise BadConfigError(f"{os.path.basename(path)}: key {key!r} has no value")
        values[normalize_key(key)] = value.strip()
    return values


def get_available_presets() -> Dict[str, str]:
    """
    Get all shipped presets and their paths.

    Returns:
        Dictionary mapping preset names to file paths

    Example:
        {"eo-baseline": "/path/to/presets/eo-baseline.env", ...}
    """
    if not os.path.isdir(PRESETS_DIR):
        return {}
    return {
        filename[: -len(PRESET_SUFFIX)]: os.path.join(PRESETS_DIR, filename)
        for filename in sorted(os.listdir(PRESETS_DIR))
        if filename.endswith(PRESET_SUFFIX)
    }


def load_preset(name: str) -> Dict[str, str]:
    """
    Load a named preset.

    Raises:
        InvalidParameterError: If no preset has that name
    """
    presets = get_available_presets()
    if name not in presets:
        raise InvalidParameterError(f"unknown preset {name!r}; available: {', '.join(presets) or 'none'}")
    logger.debug("loading preset %s", name)
    return _read_values(presets[name])


def load_config_file(path: str) -> Dict[str, str]:
    """
    Load a flat key=value config file whose keys mirror the CLI flags.

    Raises:
        BadConfigError: If the file is missing or a key has no value
    """
    if not os.path.exists(path):
        raise BadConfigError(f"config file not found: {path}")
    return _read_values(path)


def merge_settings(
    preset: Optional[str] = None,
    config_path: Optional[str] = None,
    flags: Optional[Dict[str, object]] = None,
) -> Dict[str, object]:
    """
    Combine settings with precedence preset < config file < explicit flags.

    Flags whose value is None are treated as not given.
    """
    merged: Dict[str, object] = {}
    if preset:
        merged.update(load_preset(preset))
    if config_path:
        merged.update(load_config_file(config_path))
    for key, value in (flags or {}).items():
        if value is not None:
            merged[normalize_key(key)] = value
    return merged


def get_preset_summary() -> str:
    """List the shipped presets with their first comment line."""
    presets = get_available_presets()
    if not presets:
        return "No presets available."

    summary = "Available presets:\n"
    for name, path in presets.items():
        with open(path, "r", encoding="utf-8") as f:
            first = f.readline().strip()
        note = first.lstrip("#").strip() if first.startswith("#") else ""
        summary += f"  {name:<12} {note}\n"
    return summary
