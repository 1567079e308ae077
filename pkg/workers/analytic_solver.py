"""
Analytic Solver Worker
Computes the closed-form and quadrature values the simulation is checked against.
"""
from typing import Callable, Dict, Literal

from langchain_core.messages import HumanMessage
from langgraph.types import Command

from helpers.errors import DomainError, FeeMarketError
from helpers.observability import ExecutionTracker
from helpers.state import State
from models.eo_model import (
    expected_block_fee,
    mean_block_gap,
    miner_profit_flow,
    user_welfare_at,
    welfare_at,
)
from models.params import MarketParams, ThresholdTime
from models.uc_model import uc_miner_revenue, uc_user_welfare


def _oracles(model: str, p: MarketParams, tstar: ThresholdTime) -> Dict[str, Callable[[], float]]:
    """Metric name -> thunk computing its analytic value; names match SimStats fields."""
    if model == "uc":
        threshold = ThresholdTime.never_suspend()
        return {
            "user_welfare_hat": lambda: uc_user_welfare(p),
            "miner_revenue_hat": lambda: uc_miner_revenue(p),
            "mean_block_fee_hat": lambda: expected_block_fee(threshold, p),
            "miner_profit_flow_hat": lambda: miner_profit_flow(threshold, p),
            "social_welfare_hat": lambda: welfare_at(threshold, p),
        }
    return {
        "user_welfare_hat": lambda: user_welfare_at(tstar, p),
        "miner_revenue_hat": lambda: expected_block_fee(tstar, p) / mean_block_gap(tstar, p),
        "mean_block_fee_hat": lambda: expected_block_fee(tstar, p),
        "miner_profit_flow_hat": lambda: miner_profit_flow(tstar, p),
        "social_welfare_hat": lambda: welfare_at(tstar, p),
    }


def analytic_solver_node(state: State) -> Command[Literal["simulation_runner", "markdown_writer"]]:
    """
    Evaluate every oracle that applies to the model and threshold.

    Metrics outside an oracle's domain are recorded as skipped; any other
    solver failure ends the pipeline at the report writer.
    """
    model = state.get("model", "uc")
    params = state["params"]
    tstar = state.get("tstar") or ThresholdTime.never_suspend()
    timeline = list(state.get("execution_timeline") or [])
    failed = dict(state.get("failed_stages") or {})

    analytic: Dict[str, float] = {}
    skipped: Dict[str, str] = {}
    try:
        with ExecutionTracker.track("analytic_solver", model=model) as event:
            for name, oracle in _oracles(model, params, tstar).items():
                try:
                    analytic[name] = float(oracle())
                except DomainError as e:
                    skipped[name] = e.detail
        timeline.append(event.to_dict())
    except FeeMarketError as e:
        failed["analytic_solver"] = str(e)
        message = HumanMessage(content=f"Analytic solve failed: {e}", name="analytic_solver")
        return Command(
            update={"messages": [message], "failed_stages": failed, "execution_timeline": timeline},
            goto="markdown_writer",
        )

    summary = ", ".join(f"{k}={v:.6g}" for k, v in analytic.items())
    message = HumanMessage(content=f"Analytic values: {summary}", name="analytic_solver")
    return Command(
        update={
            "messages": [message],
            "analytic": analytic,
            "skipped": skipped,
            "execution_timeline": timeline,
        },
        goto="simulation_runner",
    )
