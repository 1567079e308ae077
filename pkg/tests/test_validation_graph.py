import os

import pytest

from helpers.graph import run_validation
from helpers.numerics import RandomSource
from models.params import MarketParams, ThresholdTime
from simulation.event_sim import SimConfig
from workers.cross_checker import compare
from workers.markdown_writer import render_report
from workers.stage_descriptions import format_stage_list, get_stage_descriptions

STAGES = ["analytic_solver", "simulation_runner", "cross_checker", "markdown_writer"]


def config(n_blocks: int = 20000, seed: int = 7) -> SimConfig:
    return SimConfig(n_blocks=n_blocks, dt=1e-3, rs=RandomSource(seed))


class TestCompare:
    def test_within_relative_tolerance(self):
        row = compare("user_welfare_hat", 0.5, 0.504, 0.0, 0.01)
        assert row["passed"]
        assert row["rel_error"] == pytest.approx(0.008)

    def test_within_three_standard_errors(self):
        assert compare("m", 0.5, 0.56, 0.025, 0.01)["passed"]

    def test_outside_both(self):
        assert not compare("m", 0.5, 0.56, 0.01, 0.01)["passed"]


def test_stage_descriptions_cover_graph():
    descriptions = get_stage_descriptions()
    assert list(descriptions) == STAGES
    listing = format_stage_list(STAGES + ["unknown"])
    assert listing.count("\n") == len(STAGES) - 1
    assert "Cross Checker" in listing


def test_user_competition_passes(tmp_path, uc_params):
    state = run_validation(uc_params, config(), model="uc", out_dir=str(tmp_path), rel_tol=0.02, ks_tol=0.03)

    assert state["failed_stages"] == {}
    assert state["passed"], state["checks"]
    assert {check["metric"] for check in state["checks"]} == {
        "user_welfare_hat",
        "miner_revenue_hat",
        "mean_block_fee_hat",
        "miner_profit_flow_hat",
        "social_welfare_hat",
        "ks_distance",
    }
    assert state["analytic"]["user_welfare_hat"] == pytest.approx(0.488330, abs=1e-6)
    assert [event["name"] for event in state["execution_timeline"]] == ["analytic_solver", "simulation_runner"]

    assert state["report_path"] == os.path.join(str(tmp_path), "validation_uc.md")
    text = open(state["report_path"], encoding="utf-8").read()
    assert "## Checks (PASSED)" in text
    assert "| user_welfare_hat |" in text


def test_report_is_reproducible(tmp_path, uc_params):
    first = run_validation(uc_params, config(n_blocks=3000), out_dir=str(tmp_path / "a"))
    second = run_validation(uc_params, config(n_blocks=3000), out_dir=str(tmp_path / "b"))
    assert render_report(first) == render_report(second)


@pytest.mark.slow
def test_committed_miners_skip_welfare(tmp_path):
    p = MarketParams(lam=1.2, cost=0.3, eta=0.3)
    state = run_validation(p, config(n_blocks=5000), model="eo", tstar=ThresholdTime.finite(0.5), out_dir=str(tmp_path))

    assert "social_welfare_hat" in state["skipped"]
    assert "social_welfare_hat" not in {check["metric"] for check in state["checks"]}
    assert "## Skipped Metrics" in open(state["report_path"], encoding="utf-8").read()


def test_failed_simulation_still_reports(tmp_path, baseline):
    state = run_validation(
        baseline, config(n_blocks=1000), model="eo", tstar=ThresholdTime.never_operate(), out_dir=str(tmp_path)
    )

    assert "simulation_runner" in state["failed_stages"]
    assert state.get("checks") is None
    assert "mean_block_fee_hat" in state["skipped"]
    text = open(state["report_path"], encoding="utf-8").read()
    assert "## Failed Stages" in text
    assert "`simulation_runner`" in text
