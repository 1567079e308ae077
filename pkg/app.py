"""
Fee Market Command Line
Computes bid curves, thresholds and welfare, runs simulations, sweeps and the
patient-user estimator, and writes figure-ready CSV/JSON with a run manifest.

Exit codes: 0 success, 2 validation, 3 solver failure, 4 simulation failure.
"""
import argparse
import itertools
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config.config import LOG_LEVEL, OUTPUT_DIR, resolve_seed
from config.presets import get_preset_summary, merge_settings
from helpers.errors import (
    BadConfigError,
    DomainError,
    FeeMarketError,
    GridTooCoarseError,
    InvalidParameterError,
)
from helpers.graph import run_validation
from helpers.numerics import RandomSource
from helpers.observability import ExecutionTracker, SolverCallTracker, configure_logging
from helpers.reporting import RunManifest, write_csv, write_json
from models.eo_model import (
    STATIONARY_DENSITY_NOTE,
    check_bid_domain,
    efficient_payoff_flow,
    eo_bid_curve,
    miner_surplus,
    social_welfare,
    sweep,
    welfare_report,
)
from models.params import MarketParams, ThresholdTime
from models.patient_model import (
    bid_rate,
    bound_ladder,
    estimate_wtilde,
    left_limit_gap,
    patient_bid,
    patient_payoff_scan,
    wtilde_ode_residual,
)
from models.uc_model import uc_bid_curve
from simulation.event_sim import SimConfig, run_ensemble, simulate_eo, simulate_uc

logger = logging.getLogger("feemarket")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_SIMULATION = 4

# Errors raised while reading inputs, whatever the command
VALIDATION_ERRORS = (InvalidParameterError, BadConfigError, GridTooCoarseError)

MARKET_KEYS = ("lambda", "capacity", "cost", "reward", "eta", "rho")


class Settings:
    """Merged preset/config/flag values with typed, flag-named accessors."""

    def __init__(self, values: Dict[str, Any]):
        self.values = values

    @staticmethod
    def flag(key: str) -> str:
        return "--" + key.replace("_", "-")

    def raw(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)

    def number(self, key: str, default: Optional[float] = None) -> Optional[float]:
        value = self.values.get(key)
        if value is None:
            return default
        try:
            return float(value)
        except (TypeError, ValueError):
            raise InvalidParameterError(f"{self.flag(key)} must be a number, got {value!r}")

    def integer(self, key: str, default: Optional[int] = None, minimum: Optional[int] = None) -> Optional[int]:
        value = self.values.get(key)
        if value is None:
            result = default
        else:
            try:
                result = int(str(value))
            except ValueError:
                raise InvalidParameterError(f"{self.flag(key)} must be an integer, got {value!r}")
        if result is not None and minimum is not None and result < minimum:
            raise InvalidParameterError(f"{self.flag(key)} must be >= {minimum}, got {result}")
        return result

    def numbers(self, key: str, default: Optional[float] = None) -> List[float]:
        """Comma-separated list of numbers."""
        value = self.values.get(key)
        if value is None:
            return [] if default is None else [default]
        items = [item.strip() for item in str(value).split(",") if item.strip()]
        if not items:
            raise InvalidParameterError(f"{self.flag(key)} is empty")
        try:
            return [float(item) for item in items]
        except ValueError:
            raise InvalidParameterError(f"{self.flag(key)} must be a number or comma list, got {value!r}")

    def positive(self, key: str, default: Optional[float] = None) -> float:
        value = self.number(key, default)
        if value is None:
            raise InvalidParameterError(f"{self.flag(key)} is required")
        if not value > 0:
            raise InvalidParameterError(f"{self.flag(key)} must be > 0, got {value}")
        return value

    def thresholds(self, key: str) -> List[ThresholdTime]:
        value = self.values.get(key)
        if value is None:
            raise InvalidParameterError(f"{self.flag(key)} is required")
        try:
            return [ThresholdTime.parse(item) for item in str(value).split(",") if item.strip()]
        except InvalidParameterError as e:
            raise InvalidParameterError(f"{self.flag(key)}: {e.detail}")

    def market(self, **overrides: float) -> MarketParams:
        """MarketParams from the settings; --lambda is required."""
        kwargs = {"lam": self.positive("lambda") if "lambda" not in overrides else overrides["lambda"]}
        for key in MARKET_KEYS[1:]:
            value = overrides[key] if key in overrides else self.number(key)
            if value is not None:
                kwargs[key] = value
        return MarketParams(**kwargs)

    def resolved(self) -> Dict[str, Any]:
        return dict(sorted(self.values.items()))


def _out_dir(settings: Settings) -> str:
    out = settings.raw("out") or OUTPUT_DIR
    os.makedirs(out, exist_ok=True)
    return out


def _finish(manifest: RunManifest, out: str, paths: Sequence[str]) -> None:
    for path in paths:
        manifest.add_output(path)
    manifest_path = manifest.write(out)
    for path in list(paths) + [manifest_path]:
        print(path)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_uc_bid(settings: Settings) -> int:
    """Bid curves of the user-competition model, one series per lambda/capacity value."""
    lambdas = settings.numbers("lambda")
    capacities = settings.numbers("capacity", 1.0)
    if not lambdas:
        raise InvalidParameterError("--lambda is required")
    t_max = settings.positive("t_max", 5.0)
    points = settings.integer("points", 100, minimum=2)

    grid = np.linspace(0.0, t_max, points)
    series = []
    for lam, capacity in itertools.product(lambdas, capacities):
        p = settings.market(**{"lambda": lam, "capacity": capacity})
        series.append((lam, capacity, uc_bid_curve(grid, p).values))

    if len(series) == 1:
        header = ["t", "bid"]
    elif len(capacities) == 1:
        header = ["t"] + [f"bid_lambda={lam:g}" for lam, _, _ in series]
    elif len(lambdas) == 1:
        header = ["t"] + [f"bid_capacity={k:g}" for _, k, _ in series]
    else:
        header = ["t"] + [f"bid_lambda={lam:g}_capacity={k:g}" for lam, k, _ in series]

    out = _out_dir(settings)
    rows = [[t] + [values[i] for _, _, values in series] for i, t in enumerate(grid)]
    path = write_csv(os.path.join(out, "uc_bid.csv"), header, rows)
    _finish(RunManifest("uc-bid", settings.resolved()), out, [path])
    return EXIT_OK


def cmd_eo_bid(settings: Settings) -> int:
    """Equilibrium bids under several threshold times."""
    p = settings.market()
    thresholds = settings.thresholds("tstar")
    for threshold in thresholds:
        try:
            check_bid_domain(threshold, p)
        except DomainError as e:
            raise InvalidParameterError(f"--tstar {threshold}: {e.detail}")
    t_max = settings.positive("t_max", 3.0)
    points = settings.integer("points", 301, minimum=2)

    grid = np.linspace(0.0, t_max, points)
    curves = [eo_bid_curve(grid, threshold, p).values for threshold in thresholds]
    header = ["t", "bid"] if len(curves) == 1 else ["t"] + [f"bid_tstar={threshold}" for threshold in thresholds]

    out = _out_dir(settings)
    rows = [[t] + [values[i] for values in curves] for i, t in enumerate(grid)]
    path = write_csv(os.path.join(out, "eo_bid.csv"), header, rows)
    _finish(RunManifest("eo-bid", settings.resolved()), out, [path])
    return EXIT_OK


def cmd_eo_curves(settings: Settings) -> int:
    """M*(t*), t* e^{-lambda (K - t*)} and SW(t*) on a grid over [0, K]."""
    p = settings.market()
    points = settings.integer("points", 200, minimum=2)
    if p.eta != 0:
        raise InvalidParameterError("--eta must be 0 for eo-curves (closed forms)")

    grid = np.linspace(0.0, p.capacity, points)
    rows = [
        [t, miner_surplus(t, p), float(efficient_payoff_flow(t, p)), social_welfare(t, p)]
        for t in grid
    ]
    out = _out_dir(settings)
    path = write_csv(
        os.path.join(out, "eo_curves.csv"), ["tstar", "m_star", "efficient_lhs", "social_welfare"], rows
    )
    _finish(RunManifest("eo-curves", settings.resolved()), out, [path])
    return EXIT_OK


def cmd_eo_solve(settings: Settings) -> int:
    """t^E, t^O, y^O and welfare as one JSON object."""
    p = settings.market()
    with ExecutionTracker.track("eo_solve", **p.to_dict()):
        report = welfare_report(p)
    print(f"note: {STATIONARY_DENSITY_NOTE}", file=sys.stderr)

    out = _out_dir(settings)
    payload = {"params": p.to_dict(), **report.to_dict()}
    path = write_json(os.path.join(out, "eo_solve.json"), payload)
    _finish(RunManifest("eo-solve", settings.resolved()), out, [path])
    return EXIT_OK


def cmd_sweep(settings: Settings) -> int:
    """Solve thresholds along one parameter axis."""
    parameter = settings.raw("vary")
    if parameter not in ("lambda", "capacity", "cost", "reward"):
        raise InvalidParameterError(f"--vary must be one of lambda, capacity, cost, reward; got {parameter!r}")
    start = settings.number("from")
    stop = settings.number("to")
    if start is None or stop is None or not stop > start:
        raise InvalidParameterError(f"--from/--to must satisfy from < to, got {start}, {stop}")
    points = settings.integer("points", 50, minimum=2)
    threads = settings.integer("threads", 1, minimum=1)

    base = settings.market(**{parameter: start})
    table = sweep(base, parameter, np.linspace(start, stop, points), threads=threads)
    summary = table.shape_summary()
    logger.info("sweep shape along %s: %s", parameter, summary)

    def cell(value: Any) -> Any:
        if isinstance(value, ThresholdTime):
            return value.to_json()
        return value

    out = _out_dir(settings)
    rows = [[row.value, cell(row.t_E), cell(row.t_O), cell(row.y_O), cell(row.sw), row.status] for row in table.rows]
    csv_path = write_csv(os.path.join(out, "sweep.csv"), [parameter, "t_E", "t_O", "y_O", "SW", "status"], rows)
    statuses = [row.status for row in table.rows]
    json_path = write_json(
        os.path.join(out, "sweep_summary.json"),
        {
            "parameter": parameter,
            "base": base.to_dict(),
            "invalid_rows": statuses.count("INVALID"),
            "partial_rows": statuses.count("PARTIAL"),
            **summary,
        },
    )
    _finish(RunManifest("sweep", settings.resolved()), out, [csv_path, json_path])
    return EXIT_OK


def _sim_config(settings: Settings, p: MarketParams, seed: int) -> SimConfig:
    cfg = SimConfig(
        n_blocks=settings.integer("blocks", 100000, minimum=1),
        dt=settings.positive("dt", 1e-3),
        rs=RandomSource(seed),
        burn_in=settings.integer("burn_in", 100, minimum=0),
        hist_bins=settings.integer("bins", 200, minimum=1),
    )
    cfg.check_against(p)
    return cfg


def _eo_threshold(settings: Settings, p: MarketParams) -> ThresholdTime:
    thresholds = settings.thresholds("tstar")
    if len(thresholds) != 1:
        raise InvalidParameterError("--tstar takes a single value here")
    try:
        check_bid_domain(thresholds[0], p)
    except DomainError as e:
        raise InvalidParameterError(f"--tstar: {e.detail}")
    return thresholds[0]


def cmd_simulate(settings: Settings) -> int:
    """Monte Carlo run of the uc or eo market; JSON stats plus histogram CSV."""
    model = settings.raw("model", "uc")
    if model not in ("uc", "eo"):
        raise InvalidParameterError(f"--model must be uc or eo, got {model!r}")
    p = settings.market()
    seed = resolve_seed(settings.integer("seed"))
    cfg = _sim_config(settings, p, seed)
    tstar = _eo_threshold(settings, p) if model == "eo" else ThresholdTime.never_suspend()
    runs = settings.integer("runs", 1, minimum=1)
    threads = settings.integer("threads", 1, minimum=1)
    if model == "eo":
        print(f"note: {STATIONARY_DENSITY_NOTE}", file=sys.stderr)

    if runs > 1:
        stats = run_ensemble(p, tstar, cfg, runs, threads=threads, model=model)
    elif model == "uc":
        stats = simulate_uc(p, cfg)
    else:
        stats = simulate_eo(p, tstar, cfg)

    out = _out_dir(settings)
    json_path = write_json(
        os.path.join(out, "simulate.json"), {"params": p.to_dict(), "config": cfg.to_dict(), **stats.to_dict()}
    )
    csv_path = write_csv(
        os.path.join(out, "simulate_histogram.csv"), ["t_left", "t_right", "mass", "density"], stats.histogram_rows()
    )
    _finish(RunManifest("simulate", settings.resolved(), seeds=[seed]), out, [json_path, csv_path])
    return EXIT_OK


def _patient_grid(settings: Settings, p: MarketParams) -> np.ndarray:
    lo = settings.number("grid_min", -12.0 * p.capacity)
    hi = settings.number("grid_max", 4.0 * p.capacity)
    step = settings.positive("grid_step", p.capacity / 50)
    if not hi > lo:
        raise InvalidParameterError(f"--grid-max must exceed --grid-min, got {lo}, {hi}")
    count = int(round((hi - lo) / step)) + 1
    if count < 3:
        raise InvalidParameterError("--grid-step leaves fewer than three grid points")
    return lo + step * np.arange(count)


def cmd_patient(settings: Settings) -> int:
    """Estimate W~, check its ODE and bounds, optionally scan deviation payoffs."""
    p = settings.market()
    grid = _patient_grid(settings, p)
    out = _out_dir(settings)
    residual_path = os.path.join(out, "patient_residuals.json")

    spacing = float(grid[1] - grid[0])
    if spacing > p.capacity / 20:
        write_json(
            residual_path,
            {"status": GridTooCoarseError.code, "message": f"grid spacing {spacing} exceeds K/20 = {p.capacity / 20}"},
        )
        raise GridTooCoarseError(f"--grid-step {spacing} exceeds K/20 = {p.capacity / 20}")

    seed = resolve_seed(settings.integer("seed"))
    n_paths = settings.integer("paths", 100000, minimum=1)
    kink_guard = settings.number("kink_guard")
    curve = estimate_wtilde(
        p,
        grid,
        n_paths,
        RandomSource(seed),
        max_blocks=settings.integer("max_blocks", 200, minimum=1),
        threads=settings.integer("threads", 1, minimum=1),
    )
    report = wtilde_ode_residual(curve, p, kink_guard)
    rate = bid_rate(curve)

    payload: Dict[str, Any] = {
        "params": p.to_dict(),
        "curve": curve.to_dict(),
        "residuals": report.to_dict(),
        "bound_ladder": [rung.to_dict() for rung in bound_ladder(curve, p)],
        "left_limit": left_limit_gap(curve, p),
        "bid_rate": rate,
    }
    outputs = [write_csv(os.path.join(out, "patient_curve.csv"), ["s", "w_tilde", "std_error"], curve.rows())]

    scan_t = settings.number("scan_t")
    if scan_t is not None:
        scan = patient_payoff_scan(scan_t, curve, settings.integer("scan_points", 2001, minimum=3))
        payload["scan"] = {"t": scan_t, "bid": patient_bid(scan_t, curve, rate), **scan.to_dict()}
        argmax = np.isclose(scan.s, scan.argmax_s, rtol=0, atol=scan.step / 2)
        rows = [[s, v, int(flag)] for s, v, flag in zip(scan.s, scan.payoff, argmax)]
        outputs.append(write_csv(os.path.join(out, "patient_scan.csv"), ["s", "payoff", "argmax"], rows))

    outputs.insert(1, write_json(residual_path, payload))
    _finish(RunManifest("patient", settings.resolved(), seeds=[seed]), out, outputs)
    return EXIT_OK


def cmd_validate(settings: Settings) -> int:
    """Run the analytic-versus-simulation pipeline and write its report."""
    model = settings.raw("model", "uc")
    if model not in ("uc", "eo"):
        raise InvalidParameterError(f"--model must be uc or eo, got {model!r}")
    p = settings.market()
    seed = resolve_seed(settings.integer("seed"))
    cfg = _sim_config(settings, p, seed)
    tstar = _eo_threshold(settings, p) if model == "eo" else None
    out = _out_dir(settings)

    state = run_validation(p, cfg, model=model, tstar=tstar, out_dir=out)
    summary = {
        "model": model,
        "params": p.to_dict(),
        "passed": bool(state.get("passed")),
        "checks": state.get("checks") or [],
        "skipped": state.get("skipped") or {},
        "failed_stages": state.get("failed_stages") or {},
    }
    outputs = [write_json(os.path.join(out, "validate.json"), summary)]
    if state.get("report_path"):
        outputs.append(state["report_path"])
    _finish(RunManifest("validate", settings.resolved(), seeds=[seed]), out, outputs)
    return EXIT_OK if summary["passed"] and not summary["failed_stages"] else EXIT_SIMULATION


# command -> (handler, exit code for failures after input validation)
COMMANDS: Dict[str, Any] = {
    "uc-bid": (cmd_uc_bid, EXIT_SOLVER),
    "eo-bid": (cmd_eo_bid, EXIT_SOLVER),
    "eo-curves": (cmd_eo_curves, EXIT_SOLVER),
    "eo-solve": (cmd_eo_solve, EXIT_SOLVER),
    "sweep": (cmd_sweep, EXIT_SOLVER),
    "simulate": (cmd_simulate, EXIT_SIMULATION),
    "patient": (cmd_patient, EXIT_SIMULATION),
    "validate": (cmd_validate, EXIT_SIMULATION),
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", help="named parameter set (see 'presets')")
    parser.add_argument("--config", help="flat key=value file mirroring the flags")
    parser.add_argument("--out", help=f"output directory (default {OUTPUT_DIR})")
    parser.add_argument("--threads", help="worker processes (default 1)")
    parser.add_argument("--verbose", action="store_true", help="debug logging")


def _add_market(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda", help="block arrival rate")
    parser.add_argument("--capacity", help="block capacity K")
    parser.add_argument("--cost", help="flow operation cost c")
    parser.add_argument("--reward", help="block reward y")
    parser.add_argument("--eta", help="mass of committed miners")
    parser.add_argument("--rho", help="discount rate of patient users")


def _add_simulation(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--blocks", help="block events simulated (default 100000)")
    parser.add_argument("--dt", help="user mass per cell (default 0.001)")
    parser.add_argument("--burn-in", help="blocks discarded (default 100)")
    parser.add_argument("--bins", help="histogram bins (default 200)")
    parser.add_argument("--seed", help="random seed (falls back to $SEED, then 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feemarket", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("uc-bid", help="user-competition bid curves")
    _add_market(p)
    p.add_argument("--t-max", help="largest pool time (default 5)")
    p.add_argument("--points", help="grid points (default 100)")
    _add_common(p)

    p = sub.add_parser("eo-bid", help="bids under threshold operation")
    _add_market(p)
    p.add_argument("--tstar", help="threshold time(s), comma list; never_suspend/never_operate allowed")
    p.add_argument("--t-max", help="largest pool time (default 3)")
    p.add_argument("--points", help="grid points (default 301)")
    _add_common(p)

    p = sub.add_parser("eo-curves", help="miner surplus, efficiency condition and welfare over t*")
    _add_market(p)
    p.add_argument("--points", help="grid points (default 200)")
    _add_common(p)

    p = sub.add_parser("eo-solve", help="equilibrium and efficient thresholds, optimal reward")
    _add_market(p)
    _add_common(p)

    p = sub.add_parser("sweep", help="thresholds along one parameter")
    _add_market(p)
    p.add_argument("--vary", help="lambda, capacity, cost or reward")
    p.add_argument("--from", help="first grid value")
    p.add_argument("--to", help="last grid value")
    p.add_argument("--points", help="grid points (default 50)")
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo market simulation")
    _add_market(p)
    _add_simulation(p)
    p.add_argument("--model", help="uc or eo (default uc)")
    p.add_argument("--tstar", help="threshold time for --model eo")
    p.add_argument("--runs", help="independent runs merged into one estimate (default 1)")
    _add_common(p)

    p = sub.add_parser("patient", help="patient-user discount curve, ODE residuals and payoff scan")
    _add_market(p)
    p.add_argument("--paths", help="simulated paths (default 100000)")
    p.add_argument("--grid-min", help="smallest offset s (default -12K)")
    p.add_argument("--grid-max", help="largest offset s (default 4K)")
    p.add_argument("--grid-step", help="grid spacing (default K/50)")
    p.add_argument("--kink-guard", help="distance from multiples of K skipped by the ODE check")
    p.add_argument("--max-blocks", help="blocks per path before truncation (default 200)")
    p.add_argument("--scan-t", help="pool time of the deviation-payoff scan")
    p.add_argument("--scan-points", help="scan grid points (default 2001)")
    p.add_argument("--seed", help="random seed (falls back to $SEED, then 0)")
    _add_common(p)

    p = sub.add_parser("validate", help="cross-check simulation against the closed forms")
    _add_market(p)
    _add_simulation(p)
    p.add_argument("--model", help="uc or eo (default uc)")
    p.add_argument("--tstar", help="threshold time for --model eo")
    _add_common(p)

    sub.add_parser("presets", help="list the shipped presets")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    configure_logging("DEBUG" if args.pop("verbose", False) else LOG_LEVEL)

    if command == "presets":
        print(get_preset_summary(), end="")
        return EXIT_OK

    handler, failure_code = COMMANDS[command]
    ExecutionTracker.reset()
    SolverCallTracker.reset()
    try:
        settings = Settings(merge_settings(args.pop("preset", None), args.pop("config", None), args))
        code = handler(settings)
    except VALIDATION_ERRORS as e:
        print(f"feemarket {command}: error: {e.detail}", file=sys.stderr)
        return EXIT_VALIDATION
    except FeeMarketError as e:
        print(f"feemarket {command}: failed: {e}", file=sys.stderr)
        return failure_code

    logger.debug("solver calls: %s", SolverCallTracker.get_stats())
    for event in ExecutionTracker.get_events():
        logger.debug("%s: %.3fs (%s)", event.name, event.duration_seconds or 0.0, event.status)
    return code


if __name__ == "__main__":
    sys.exit(main())
