"""
Markdown Writer Worker
Generates the validation report from analytic values, simulation stats and checks.
"""
import os
from typing import Literal

from langchain_core.messages import HumanMessage
from langgraph.types import Command

from config.config import OUTPUT_DIR
from helpers.state import State
from workers.stage_descriptions import format_stage_list, get_stage_descriptions


def render_report(state: State) -> str:
    """Build the markdown text; no timestamps so reruns produce the same file."""
    model = state.get("model", "uc")
    params = state.get("params")
    tstar = state.get("tstar")
    stats = state.get("stats")
    checks = state.get("checks") or []
    skipped = state.get("skipped") or {}
    failed = state.get("failed_stages") or {}

    markdown = f"# Validation Report - {model.upper()} model\n\n"
    if params is not None:
        markdown += "**Parameters:** " + ", ".join(f"{k}={v:g}" for k, v in params.to_dict().items()) + "\n\n"
    if model == "eo" and tstar is not None:
        markdown += f"**Threshold time:** {tstar}\n\n"
    if stats is not None:
        markdown += f"**Blocks recorded:** {stats.n_blocks_recorded}\n\n"
        markdown += f"**Seed:** {stats.seed}\n\n"
    markdown += "## Stages\n\n" + format_stage_list(list(get_stage_descriptions())) + "\n\n---\n\n"

    if failed:
        markdown += "## Failed Stages\n\n"
        for stage, error in failed.items():
            markdown += f"- `{stage}`: {error}\n"
        markdown += "\n"

    if checks:
        verdict = "PASSED" if state.get("passed") else "FAILED"
        markdown += f"## Checks ({verdict})\n\n"
        markdown += "| metric | analytic | simulated | std error | rel error | result |\n"
        markdown += "|---|---|---|---|---|---|\n"
        for check in checks:
            result = "ok" if check["passed"] else "FAIL"
            markdown += (
                f"| {check['metric']} | {check['analytic']:.6g} | {check['simulated']:.6g} "
                f"| {check['std_error']:.3g} | {check['rel_error']:.3g} | {result} |\n"
            )
        markdown += "\n"

    if skipped:
        markdown += "## Skipped Metrics\n\n"
        for name, reason in skipped.items():
            markdown += f"- `{name}`: {reason}\n"
        markdown += "\n"
    return markdown


def markdown_writer_node(state: State) -> Command[Literal["__end__"]]:
    """
    Save the validation report as validation_<model>.md.

    Args:
        state: Final workflow state

    Returns:
        Command routing to END
    """
    model = state.get("model", "uc")
    out_dir = state.get("out_dir") or OUTPUT_DIR

    try:
        markdown = render_report(state)
        os.makedirs(out_dir, exist_ok=True)
        filepath = os.path.join(out_dir, f"validation_{model}.md")
        with open(filepath, "w", encoding="utf-8") as f:
            f.write(markdown)

        message = HumanMessage(content=f"Generated validation report: {filepath}", name="markdown_writer")
        return Command(update={"messages": [message], "report_path": filepath}, goto="__end__")

    except OSError as e:
        failed = dict(state.get("failed_stages") or {})
        failed["markdown_writer"] = str(e)
        message = HumanMessage(content=f"Error writing validation report: {e}", name="markdown_writer")
        return Command(update={"messages": [message], "failed_stages": failed}, goto="__end__")
