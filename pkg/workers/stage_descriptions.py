"""
Stage metadata and descriptions for the validation pipeline.
"""
from typing import Any, Dict, List


def get_stage_descriptions() -> Dict[str, Dict[str, Any]]:
    """
    Returns metadata for all validation pipeline stages.

    Each stage has:
    - name: Display name
    - capability: What it does
    - limitations: What it can't do
    - output_format: What it returns
    """
    return {
        "analytic_solver": {
            "name": "Analytic Solver",
            "capability": "Evaluates closed forms and quadrature oracles for welfare, revenue, block fees and profit",
            "limitations": "Welfare oracles exist for eta = 0 only; other metrics outside their domain are skipped",
            "output_format": "Metric name to analytic value",
        },
        "simulation_runner": {
            "name": "Market Simulator",
            "capability": "Simulates block arrivals and greedy validation of dt-mass user cells",
            "limitations": "Discretisation error of order dt; Monte Carlo noise of order 1/sqrt(blocks)",
            "output_format": "SimStats with standard errors and a pool-time histogram",
        },
        "cross_checker": {
            "name": "Cross Checker",
            "capability": "Compares each simulated estimate with its analytic value and the histogram with the stationary law",
            "limitations": "Only compares metrics with an analytic value",
            "output_format": "One check row per metric plus the KS distance",
        },
        "markdown_writer": {
            "name": "Markdown Report Generator",
            "capability": "Writes the validation report to the output directory",
            "limitations": "Can only format existing results",
            "output_format": "validation_<model>.md",
        },
    }


def format_stage_list(stages: List[str]) -> str:
    """
    Format the stage list for the report header.
    """
    descriptions = get_stage_descriptions()
    lines = []
    for stage in stages:
        if stage in descriptions:
            info = descriptions[stage]
            lines.append(f"- **{info['name']}** (`{stage}`): {info['capability']}. Limitations: {info['limitations']}.")
    return "\n".join(lines)
