"""
Cross Checker Worker
Compares simulated estimates with their analytic values.
"""
from typing import List, Literal

from langchain_core.messages import HumanMessage
from langgraph.types import Command

from helpers.state import CheckRow, State

DEFAULT_REL_TOL = 0.01
DEFAULT_KS_TOL = 0.01


def compare(name: str, analytic: float, simulated: float, std_error: float, rel_tol: float) -> CheckRow:
    """One check row: within rel_tol of the analytic value, or within three standard errors of it."""
    error = abs(simulated - analytic)
    return CheckRow(
        metric=name,
        analytic=analytic,
        simulated=simulated,
        std_error=std_error,
        rel_error=error / max(abs(analytic), 1e-12),
        passed=error <= rel_tol * abs(analytic) or error <= 3.0 * std_error,
    )


def cross_checker_node(state: State) -> Command[Literal["markdown_writer"]]:
    """
    Check every analytic metric within rel_tol and the KS distance within ks_tol.

    Args:
        state: Workflow state with analytic values and stats

    Returns:
        Command routing to markdown_writer
    """
    analytic = state.get("analytic") or {}
    stats = state["stats"]
    rel_tol = state.get("rel_tol") or DEFAULT_REL_TOL
    ks_tol = state.get("ks_tol") or DEFAULT_KS_TOL

    checks: List[CheckRow] = []
    for name, value in analytic.items():
        estimate = getattr(stats, name)
        checks.append(compare(name, value, estimate.value, estimate.std_error, rel_tol))

    checks.append(
        CheckRow(
            metric="ks_distance",
            analytic=0.0,
            simulated=stats.ks_distance,
            std_error=0.0,
            rel_error=stats.ks_distance,
            passed=stats.ks_distance <= ks_tol,
        )
    )

    passed = all(check["passed"] for check in checks)
    failing = [check["metric"] for check in checks if not check["passed"]]
    content = "All checks passed" if passed else f"Failed checks: {', '.join(failing)}"
    message = HumanMessage(content=content, name="cross_checker")
    return Command(
        update={"messages": [message], "checks": checks, "passed": passed},
        goto="markdown_writer",
    )
