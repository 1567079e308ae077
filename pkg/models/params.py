"""
Core value types: market primitives, miner threshold times and sampled bid curves.
"""
import math
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from helpers.errors import InvalidParameterError

# Sweep/CLI parameter names mapped to MarketParams fields
PARAMETER_FIELDS = {
    "lambda": "lam",
    "capacity": "capacity",
    "cost": "cost",
    "reward": "reward",
    "eta": "eta",
    "rho": "rho",
}

# Largest double below one. Bids saturate here instead of rounding up to 1.0
BID_MAX = float(np.nextafter(1.0, 0.0))


def clamp_bid(values: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    if np.ndim(values) == 0:
        return min(float(values), BID_MAX)
    return np.minimum(values, BID_MAX)


@dataclass(frozen=True)
class MarketParams:
    """
    Primitive constants of the market.

    User arrivals are normalised to rate 1, so pool time t is also the pending mass.

    Attributes:
        lam: Block arrival rate while miners operate
        capacity: Mass of transactions per block (K)
        cost: Flow operation cost (c)
        reward: Block reward (y)
        eta: Mass of committed miners, in [0, 1]
        rho: Discount rate of patient users
    """

    lam: float
    capacity: float = 1.0
    cost: float = 0.0
    reward: float = 0.0
    eta: float = 0.0
    rho: float = 1.0

    def __post_init__(self):
        checks = (
            ("lambda", self.lam, self.lam > 0),
            ("capacity", self.capacity, self.capacity > 0),
            ("cost", self.cost, self.cost >= 0),
            ("reward", self.reward, self.reward >= 0),
            ("eta", self.eta, 0 <= self.eta <= 1),
            ("rho", self.rho, self.rho > 0),
        )
        for name, value, ok in checks:
            if not ok or not math.isfinite(value):
                raise InvalidParameterError(f"invalid {name}: {value}")

    @property
    def throughput(self) -> float:
        """lambda * K, the validated mass per unit time when miners operate."""
        return self.lam * self.capacity

    def with_value(self, parameter: str, value: float) -> "MarketParams":
        """Copy with one parameter replaced (parameter uses CLI names, e.g. 'lambda')."""
        if parameter not in PARAMETER_FIELDS:
            raise InvalidParameterError(
                f"unknown parameter {parameter!r}; expected one of {sorted(PARAMETER_FIELDS)}"
            )
        return replace(self, **{PARAMETER_FIELDS[parameter]: float(value)})

    def to_dict(self) -> Dict[str, float]:
        values = asdict(self)
        values["lambda"] = values.pop("lam")
        return values


class ThresholdKind(str, Enum):
    NEVER_SUSPEND = "never_suspend"
    FINITE = "finite"
    NEVER_OPERATE = "never_operate"


@dataclass(frozen=True)
class ThresholdTime:
    """Miner operation start time: a finite t >= 0, or one of the two infinite cases."""

    kind: ThresholdKind
    value: Optional[float] = None

    def __post_init__(self):
        if self.kind is ThresholdKind.FINITE:
            if self.value is None or not math.isfinite(self.value) or self.value < 0:
                raise InvalidParameterError(f"finite threshold needs a value >= 0, got {self.value}")
        elif self.value is not None:
            raise InvalidParameterError(f"{self.kind.value} threshold carries no value")

    @classmethod
    def finite(cls, value: float) -> "ThresholdTime":
        return cls(ThresholdKind.FINITE, float(value))

    @classmethod
    def never_suspend(cls) -> "ThresholdTime":
        return cls(ThresholdKind.NEVER_SUSPEND)

    @classmethod
    def never_operate(cls) -> "ThresholdTime":
        return cls(ThresholdKind.NEVER_OPERATE)

    @classmethod
    def parse(cls, raw: Union[str, float, "ThresholdTime"]) -> "ThresholdTime":
        """Read '0.5', 'never_suspend', '-inf', 'never_operate' or 'inf'."""
        if isinstance(raw, ThresholdTime):
            return raw
        if isinstance(raw, str):
            text = raw.strip().lower().replace("-", "_")
            if text in ("never_suspend", "_inf"):
                return cls.never_suspend()
            if text in ("never_operate", "inf", "+inf"):
                return cls.never_operate()
            try:
                raw = float(raw)
            except ValueError:
                raise InvalidParameterError(f"cannot read threshold time {raw!r}")
        if raw == -math.inf:
            return cls.never_suspend()
        if raw == math.inf:
            return cls.never_operate()
        return cls.finite(raw)

    @property
    def is_finite(self) -> bool:
        return self.kind is ThresholdKind.FINITE

    def as_float(self) -> float:
        """-inf / value / +inf."""
        if self.kind is ThresholdKind.NEVER_SUSPEND:
            return -math.inf
        if self.kind is ThresholdKind.NEVER_OPERATE:
            return math.inf
        return float(self.value)

    def to_json(self) -> Union[str, float]:
        """Infinite thresholds serialise as strings, never as sentinel numbers."""
        if self.is_finite:
            return float(self.value)
        return self.kind.value

    def __str__(self) -> str:
        return str(self.to_json())


@dataclass(frozen=True)
class BidCurve:
    """Bids sampled on a strictly increasing grid of pool times."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 1:
            raise InvalidParameterError("bid curve grid and values must be 1-D arrays of equal length")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise InvalidParameterError("bid curve grid must be strictly increasing")
        if np.any(grid < 0):
            raise InvalidParameterError("bid curve grid must be nonnegative")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def check_shape(self, atol: float = 1e-12) -> Dict[str, bool]:
        """Evaluate the equilibrium bid properties on the sampled points."""
        values = self.values
        return {
            "in_unit_interval": bool(np.all(values >= -atol) and np.all(values < 1.0)),
            # a flat run is allowed only once the bid has saturated at BID_MAX
            "strictly_increasing": bool(values.size < 2 or np.all((np.diff(values) > 0) | (values[1:] >= BID_MAX))),
            "zero_at_origin": bool(self.grid[0] != 0.0 or abs(values[0]) <= atol),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {"grid": self.grid.tolist(), "values": self.values.tolist()}


def pick_argmax(s: np.ndarray, payoff: np.ndarray, tie_tol: float = 1e-9) -> float:
    """Argmax of payoff; among near-ties (within tie_tol of the max) the offset closest to zero wins."""
    best = float(np.max(payoff))
    candidates = s[payoff >= best - tie_tol]
    return float(candidates[np.argmin(np.abs(candidates))])


@dataclass
class DeviationScan:
    """Deviation payoffs of one user over reported offsets s."""

    s: np.ndarray
    payoff: np.ndarray
    argmax_s: float
    step: float
    tie_tol: float = 1e-9

    @property
    def peak_at_zero(self) -> bool:
        return abs(self.argmax_s) <= self.step * (1 + 1e-9)

    def rows(self) -> List[Tuple[float, float]]:
        return list(zip(self.s.tolist(), self.payoff.tolist()))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "argmax_s": self.argmax_s,
            "step": self.step,
            "tie_tol": self.tie_tol,
            "peak_at_zero": self.peak_at_zero,
        }
