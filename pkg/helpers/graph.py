"""
LangGraph Workflow
Builds and runs the analytic-versus-simulation validation graph.
"""
import logging
from typing import Any, Dict, Optional

from langgraph.graph import START, StateGraph

from helpers.state import State
from models.params import MarketParams, ThresholdTime
from simulation.event_sim import SimConfig
from workers.analytic_solver import analytic_solver_node
from workers.cross_checker import cross_checker_node
from workers.markdown_writer import markdown_writer_node
from workers.simulation_runner import simulation_runner_node

logger = logging.getLogger(__name__)


def build_validation_graph():
    """
    Build and compile the validation workflow.

    analytic_solver -> simulation_runner -> cross_checker -> markdown_writer;
    a failing stage jumps straight to markdown_writer.

    Returns:
        Compiled graph ready for execution
    """
    workflow = StateGraph(State)

    workflow.add_node("analytic_solver", analytic_solver_node)
    workflow.add_node("simulation_runner", simulation_runner_node)
    workflow.add_node("cross_checker", cross_checker_node)
    workflow.add_node("markdown_writer", markdown_writer_node)

    workflow.add_edge(START, "analytic_solver")

    # Single-run workflow, no checkpointing
    return workflow.compile(checkpointer=None)


def run_validation(
    p: MarketParams,
    cfg: SimConfig,
    model: str = "uc",
    tstar: Optional[ThresholdTime] = None,
    out_dir: Optional[str] = None,
    rel_tol: Optional[float] = None,
    ks_tol: Optional[float] = None,
) -> Dict[str, Any]:
    """
    Run the validation pipeline once.

    Returns:
        Final workflow state (checks, passed, report_path, failed_stages, ...)
    """
    initial_state = {
        "messages": [],
        "model": model,
        "params": p,
        "tstar": tstar if model == "eo" else ThresholdTime.never_suspend(),
        "sim_config": cfg,
        "rel_tol": rel_tol,
        "ks_tol": ks_tol,
        "out_dir": out_dir,
        "failed_stages": {},
        "execution_timeline": [],
    }
    final_state = build_validation_graph().invoke(initial_state)
    logger.info("validation of %s model finished: passed=%s", model, final_state.get("passed"))
    return final_state
