"""
Simulation Runner Worker
Runs the Monte Carlo market simulation for the configured model.
"""
from typing import Literal

from langchain_core.messages import HumanMessage
from langgraph.types import Command

from helpers.errors import FeeMarketError
from helpers.observability import ExecutionTracker
from helpers.state import State
from simulation.event_sim import simulate_eo, simulate_uc


def simulation_runner_node(state: State) -> Command[Literal["cross_checker", "markdown_writer"]]:
    """
    Simulate the market and store the SimStats.

    Args:
        state: Workflow state with params, sim_config and (for eo) tstar

    Returns:
        Command routing to cross_checker, or to markdown_writer on failure
    """
    model = state.get("model", "uc")
    timeline = list(state.get("execution_timeline") or [])
    failed = dict(state.get("failed_stages") or {})
    cfg = state["sim_config"]

    try:
        with ExecutionTracker.track("simulation_runner", model=model, n_blocks=cfg.n_blocks) as event:
            if model == "uc":
                stats = simulate_uc(state["params"], cfg)
            else:
                stats = simulate_eo(state["params"], state["tstar"], cfg)
        timeline.append(event.to_dict())
    except FeeMarketError as e:
        failed["simulation_runner"] = str(e)
        message = HumanMessage(content=f"Simulation failed: {e}", name="simulation_runner")
        return Command(
            update={"messages": [message], "failed_stages": failed, "execution_timeline": timeline},
            goto="markdown_writer",
        )

    message = HumanMessage(
        content=f"Simulated {stats.n_blocks_recorded} blocks (KS distance {stats.ks_distance:.4g})",
        name="simulation_runner",
    )
    return Command(
        update={"messages": [message], "stats": stats, "execution_timeline": timeline},
        goto="cross_checker",
    )
