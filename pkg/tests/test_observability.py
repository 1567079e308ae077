import pytest

from helpers.errors import DomainError
from helpers.observability import ExecutionTracker, SolverCallTracker


def test_track_records_success():
    with ExecutionTracker.track("equilibrium_threshold", lam=1.2) as event:
        pass
    assert ExecutionTracker.get_events() == [event]
    data = event.to_dict()
    assert data["status"] == "ok"
    assert data["metadata"] == {"lam": 1.2}
    assert data["duration_seconds"] >= 0


def test_track_records_failure_and_reraises():
    with pytest.raises(DomainError):
        with ExecutionTracker.track("welfare_at"):
            raise DomainError("welfare is defined for eta = 0 only")
    (event,) = ExecutionTracker.get_events()
    assert event.status.startswith("failed: ")


def test_solver_calls_by_kernel():
    assert SolverCallTracker.get_stats() == {"total_calls": 0}
    SolverCallTracker.record("bisect", iterations=40)
    SolverCallTracker.record("integrate", iterations=21)
    SolverCallTracker.record("integrate", iterations=63, converged=False)
    stats = SolverCallTracker.get_stats()
    assert stats["total_calls"] == 3
    assert stats["by_kernel"]["integrate"] == {"calls": 2, "iterations": 84, "failures": 1}
