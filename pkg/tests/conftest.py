"""Shared fixtures for the test suite."""
import pytest

from helpers.numerics import RandomSource
from helpers.observability import ExecutionTracker, SolverCallTracker
from models.params import MarketParams


@pytest.fixture
def baseline() -> MarketParams:
    """Parameters behind most figures: lambda=1.2, K=1, c=0.3, y=0, eta=0."""
    return MarketParams(lam=1.2, capacity=1.0, cost=0.3)


@pytest.fixture
def uc_params() -> MarketParams:
    return MarketParams(lam=1.2, capacity=1.0)


@pytest.fixture
def patient_params() -> MarketParams:
    return MarketParams(lam=1.2, capacity=1.0, rho=1.0)


@pytest.fixture
def rs() -> RandomSource:
    return RandomSource(seed=7)


@pytest.fixture(autouse=True)
def clean_trackers():
    ExecutionTracker.reset()
    SolverCallTracker.reset()
    yield
    ExecutionTracker.reset()
    SolverCallTracker.reset()
