"""
Observability helpers for tracking solver calls, simulation runs and pipeline stages.
"""
import logging
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, Iterator, List, Optional

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str = "INFO") -> None:
    """
    Install a single stderr handler on the root logger.

    Args:
        level: Logging level name (DEBUG, INFO, WARNING, ...)
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_feemarket", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._feemarket = True
    root.addHandler(handler)
    root.setLevel(level.upper())


@dataclass
class ExecutionEvent:
    """Tracks one solver, simulation or pipeline stage execution."""

    name: str
    start_time: datetime
    end_time: Optional[datetime] = None
    duration_seconds: Optional[float] = None
    status: str = "running"
    metadata: Dict[str, Any] = field(default_factory=dict)

    def finish(self, status: str = "ok"):
        """Mark the event as finished and calculate duration."""
        self.end_time = datetime.now()
        self.status = status
        if self.start_time:
            self.duration_seconds = (self.end_time - self.start_time).total_seconds()

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for serialization."""
        return {
            "name": self.name,
            "start_time": self.start_time.isoformat() if self.start_time else None,
            "end_time": self.end_time.isoformat() if self.end_time else None,
            "duration_seconds": self.duration_seconds,
            "status": self.status,
            "metadata": self.metadata,
        }


class ExecutionTracker:
    """Singleton tracker for managing execution events."""

    _instance = None
    _events: List[ExecutionEvent] = []

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    @classmethod
    def start(cls, name: str, **metadata) -> ExecutionEvent:
        """Start tracking an execution."""
        event = ExecutionEvent(name=name, start_time=datetime.now(), metadata=metadata)
        cls._events.append(event)
        return event

    @classmethod
    @contextmanager
    def track(cls, name: str, **metadata) -> Iterator[ExecutionEvent]:
        """
        Context manager that times a block and logs its outcome.

        Example:
            with ExecutionTracker.track("equilibrium_threshold", lam=1.2):
                t_e = equilibrium_threshold(params)
        """
        event = cls.start(name, **metadata)
        log = logging.getLogger(__name__)
        try:
            yield event
        except Exception as e:
            event.finish(status=f"failed: {e}")
            log.warning("%s failed after %.3fs: %s", name, event.duration_seconds, e)
            raise
        event.finish()
        log.debug("%s finished in %.3fs", name, event.duration_seconds)

    @classmethod
    def get_events(cls) -> List[ExecutionEvent]:
        """Get all execution events."""
        return cls._events.copy()

    @classmethod
    def reset(cls):
        """Reset tracker for new execution."""
        cls._events = []


class SolverCallTracker:
    """Counts root-finder and quadrature calls per kernel."""

    _calls: Dict[str, Dict[str, int]] = {}

    @classmethod
    def record(cls, kernel: str, iterations: int = 0, converged: bool = True):
        """Record one numerical kernel call."""
        entry = cls._calls.setdefault(kernel, {"calls": 0, "iterations": 0, "failures": 0})
        entry["calls"] += 1
        entry["iterations"] += int(iterations)
        if not converged:
            entry["failures"] += 1

    @classmethod
    def get_stats(cls) -> Dict[str, Any]:
        """Get per-kernel call statistics."""
        if not cls._calls:
            return {"total_calls": 0}
        stats: Dict[str, Any] = {"total_calls": sum(v["calls"] for v in cls._calls.values())}
        stats["by_kernel"] = {name: dict(values) for name, values in cls._calls.items()}
        return stats

    @classmethod
    def reset(cls):
        """Reset tracker for new execution."""
        cls._calls = {}
