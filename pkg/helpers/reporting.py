"""
Output writers.
CSV and JSON files for figure data plus the run manifest written beside them.
"""
import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from config.config import TOOL_VERSION
from helpers.errors import FeeMarketError

logger = logging.getLogger(__name__)


class NonFiniteOutputError(FeeMarketError):
    """A numeric output field is NaN or infinite."""

    code = "NON_FINITE_OUTPUT"


def format_value(value: Any) -> str:
    """17 significant digits for floats; everything else as str."""
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise NonFiniteOutputError(f"refusing to write non-finite value {value}")
        return format(float(value), ".17g")
    if isinstance(value, (np.integer,)):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """
    Write a comma-separated file with LF line endings.

    Args:
        path: Destination file
        header: Column names
        rows: Row values, same length as header

    Returns:
        The path written
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
            writer.writerow([format_value(v) for v in row])
    logger.debug("wrote %s", path)
    return path


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(path: str, data: Dict[str, Any]) -> str:
    """
    Write one JSON object. NaN or infinite numbers fail the write.

    Raises:
        NonFiniteOutputError: If a numeric field is not finite
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    try:
        text = json.dumps(_plain(data), indent=2, allow_nan=False)
    except ValueError as e:
        raise NonFiniteOutputError(f"{os.path.basename(path)}: {e}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
        f.write("\n")
    logger.debug("wrote %s", path)
    return path


def file_digest(path: str) -> str:
    """sha256 hex digest of a file."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to reproduce one command's outputs."""

    command: str
    parameters: Dict[str, Any]
    seeds: List[int] = field(default_factory=list)
    tool_version: str = TOOL_VERSION
    outputs: Dict[str, str] = field(default_factory=dict)

    def add_output(self, path: str) -> None:
        self.outputs[os.path.basename(path)] = file_digest(path)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "parameters": self.parameters,
            "seeds": list(self.seeds),
            "tool_version": self.tool_version,
            "outputs": dict(sorted(self.outputs.items())),
        }

    def write(self, out_dir: str, name: Optional[str] = None) -> str:
        path = os.path.join(out_dir, f"{name or self.command}.manifest.json")
        return write_json(path, self.to_dict())
