"""
Configuration for the fee-market toolkit.
Defaults come from the environment (or a .env file) so figure runs are repeatable.
"""
import os
from typing import Optional

from dotenv import load_dotenv

from helpers.errors import InvalidParameterError

# Load environment variables from .env file if it exists
load_dotenv()

TOOL_VERSION = "1.0.0"

# Output Configuration
OUTPUT_DIR = os.getenv(
    "FEEMARKET_OUTPUT_DIR",
    os.path.join(os.path.dirname(os.path.dirname(__file__)), "output"),
)

# Preset files shipped with the repository
PRESETS_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "presets")

LOG_LEVEL = os.getenv("FEEMARKET_LOG_LEVEL", "INFO")

# Numerical defaults
DEFAULT_ABS_TOL = float(os.getenv("FEEMARKET_ABS_TOL", "1e-10"))
DEFAULT_REL_TOL = float(os.getenv("FEEMARKET_REL_TOL", "1e-10"))
DEFAULT_MAX_ITER = int(os.getenv("FEEMARKET_MAX_ITER", "200"))

# Simulation defaults
DEFAULT_BURN_IN = int(os.getenv("FEEMARKET_BURN_IN", "100"))
DEFAULT_HIST_BINS = int(os.getenv("FEEMARKET_HIST_BINS", "200"))

# Patient model defaults
DEFAULT_PATIENT_MAX_BLOCKS = int(os.getenv("FEEMARKET_PATIENT_MAX_BLOCKS", "200"))
DEFAULT_PATIENT_BATCH = int(os.getenv("FEEMARKET_PATIENT_BATCH", "20000"))


def resolve_seed(flag_value: Optional[int] = None) -> int:
    """
    Pick the seed for a run.

    Args:
        flag_value: Seed given explicitly (e.g. via --seed)

    Returns:
        The explicit seed, else the SEED environment variable, else 0

    Raises:
        InvalidParameterError: If SEED is set but is not a nonnegative integer
    """
    if flag_value is not None:
        return int(flag_value)

    raw = os.getenv("SEED", "").strip()
    if not raw:
        return 0
    try:
        seed = int(raw)
    except ValueError:
        raise InvalidParameterError(f"SEED environment variable must be an integer, got {raw!r}")
    if seed < 0:
        raise InvalidParameterError(f"SEED must be nonnegative, got {seed}")
    return seed
