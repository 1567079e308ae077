"""
State management for the validation workflow.
"""
from typing import Any, Dict, List, Optional

from typing_extensions import TypedDict
from langgraph.graph import MessagesState


class CheckRow(TypedDict):
    """One analytic-versus-simulated comparison."""

    metric: str
    analytic: float
    simulated: float
    std_error: float
    rel_error: float
    passed: bool


class State(MessagesState):
    """
    State that flows through the LangGraph validation workflow.

    Inherits 'messages' from MessagesState for the per-stage log.
    """
    # Inputs
    model: Optional[str]  # "uc" or "eo"
    params: Optional[Any]  # MarketParams
    tstar: Optional[Any]  # ThresholdTime (eo only)
    sim_config: Optional[Any]  # SimConfig
    rel_tol: Optional[float]  # Relative tolerance for analytic vs simulated
    ks_tol: Optional[float]  # Bound on the stationary KS distance
    out_dir: Optional[str]  # Where the report is written

    # Stage outputs
    analytic: Optional[Dict[str, float]]  # metric -> closed-form / quadrature value
    skipped: Optional[Dict[str, str]]  # metric -> reason it has no analytic value
    stats: Optional[Any]  # SimStats
    checks: Optional[List[CheckRow]]  # one row per compared metric
    passed: Optional[bool]
    report_path: Optional[str]

    # Observability and tracking
    failed_stages: Optional[Dict[str, str]]  # stage -> error message
    execution_timeline: Optional[List[Dict[str, Any]]]  # Node execution history with timing
