"""
Monte Carlo simulator of the fee market.
Blocks arrive as a Poisson process (suspended below the threshold for
switching miners), users arrive as a unit-rate continuum discretised into
dt-mass cells, and each block validates the highest bids greedily. Used as
an independent oracle for the closed forms.
"""
import logging
import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from config.config import DEFAULT_BURN_IN, DEFAULT_HIST_BINS
from helpers.errors import BadConfigError, InvalidParameterError
from helpers.numerics import RandomSource, ks_distance, sample_exponential
from helpers.observability import ExecutionTracker
from models.eo_model import check_bid_domain, eo_bid, eo_bid_curve, eo_w, stationary_cdf
from models.params import DeviationScan, MarketParams, ThresholdKind, ThresholdTime, pick_argmax
from models.uc_model import uc_bid, uc_stationary_cdf, uc_w

logger = logging.getLogger(__name__)

# Histogram and KS grid reach this many mean lifetimes past the threshold
_HIST_LIFETIMES = 15.0

# Per-block quantities accumulated for ratio estimates
METRICS = ("fee", "surplus", "validated", "operating", "profit", "welfare")


@dataclass(frozen=True)
class SimConfig:
    """
    Attributes:
        n_blocks: Block events simulated, burn-in included
        dt: User mass carried by one cell
        burn_in: Leading blocks discarded before recording
        rs: Random stream for block gaps
        hist_bins: Bins of the pool-time histogram
    """

    n_blocks: int
    dt: float
    rs: RandomSource
    burn_in: int = DEFAULT_BURN_IN
    hist_bins: int = DEFAULT_HIST_BINS

    def __post_init__(self):
        if self.n_blocks < 1:
            raise BadConfigError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if not self.dt > 0 or not math.isfinite(self.dt):
            raise BadConfigError(f"dt must be > 0, got {self.dt}")
        if self.burn_in < 0:
            raise BadConfigError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.burn_in >= self.n_blocks:
            raise BadConfigError(f"burn_in ({self.burn_in}) must be below n_blocks ({self.n_blocks})")
        if self.hist_bins < 1:
            raise BadConfigError(f"hist_bins must be >= 1, got {self.hist_bins}")

    def check_against(self, p: MarketParams) -> None:
        """dt must resolve the block capacity."""
        if self.dt > p.capacity / 100:
            raise BadConfigError(f"dt={self.dt} exceeds K/100={p.capacity / 100}")

    def with_stream(self, stream_id: int) -> "SimConfig":
        rs = RandomSource(seed=self.rs.seed, stream_id=stream_id, path=self.rs.path)
        return SimConfig(self.n_blocks, self.dt, rs, self.burn_in, self.hist_bins)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_blocks": self.n_blocks,
            "dt": self.dt,
            "burn_in": self.burn_in,
            "hist_bins": self.hist_bins,
            "rs": self.rs.to_dict(),
        }


@dataclass
class Estimate:
    value: float
    std_error: float

    def to_dict(self) -> Dict[str, float]:
        return {"value": self.value, "std_error": self.std_error}


@dataclass
class SimAccumulator:
    """
    Sufficient statistics of one or more runs.

    Sums are over recorded blocks; merging two accumulators built on the same
    grid is associative and commutative.
    """

    grid: np.ndarray
    n: int = 0
    sum_gap: float = 0.0
    sum_gap_sq: float = 0.0
    sums: Dict[str, float] = field(default_factory=lambda: dict.fromkeys(METRICS, 0.0))
    sums_sq: Dict[str, float] = field(default_factory=lambda: dict.fromkeys(METRICS, 0.0))
    sums_cross: Dict[str, float] = field(default_factory=lambda: dict.fromkeys(METRICS, 0.0))
    time_below: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.time_below is None:
            self.time_below = np.zeros(self.grid.size)

    def add(self, gaps: np.ndarray, metrics: Dict[str, np.ndarray]) -> None:
        self.n += gaps.size
        self.sum_gap += float(gaps.sum())
        self.sum_gap_sq += float(np.dot(gaps, gaps))
        for name in METRICS:
            values = metrics[name]
            self.sums[name] += float(values.sum())
            self.sums_sq[name] += float(np.dot(values, values))
            self.sums_cross[name] += float(np.dot(values, gaps))

        # sum_i min(G_i, x) on the grid via sorted partial sums
        ordered = np.sort(gaps)
        partial = np.concatenate(([0.0], np.cumsum(ordered)))
        idx = np.searchsorted(ordered, self.grid, side="left")
        self.time_below += partial[idx] + self.grid * (ordered.size - idx)

    def merge(self, other: "SimAccumulator") -> "SimAccumulator":
        if self.grid.shape != other.grid.shape or not np.array_equal(self.grid, other.grid):
            raise BadConfigError("cannot merge runs recorded on different grids")
        return SimAccumulator(
            grid=self.grid,
            n=self.n + other.n,
            sum_gap=self.sum_gap + other.sum_gap,
            sum_gap_sq=self.sum_gap_sq + other.sum_gap_sq,
            sums={k: self.sums[k] + other.sums[k] for k in METRICS},
            sums_sq={k: self.sums_sq[k] + other.sums_sq[k] for k in METRICS},
            sums_cross={k: self.sums_cross[k] + other.sums_cross[k] for k in METRICS},
            time_below=self.time_below + other.time_below,
        )

    def rate(self, name: str) -> Estimate:
        """Per-unit-time ratio sum(X)/sum(G) with a delta-method standard error."""
        ratio = self.sums[name] / self.sum_gap
        if self.n < 2:
            return Estimate(ratio, 0.0)
        spread = self.sums_sq[name] - 2 * ratio * self.sums_cross[name] + ratio**2 * self.sum_gap_sq
        mean_gap = self.sum_gap / self.n
        variance = max(spread, 0.0) / (self.n - 1)
        return Estimate(ratio, math.sqrt(variance / self.n) / mean_gap)

    def per_block(self, name: str) -> Estimate:
        mean = self.sums[name] / self.n
        if self.n < 2:
            return Estimate(mean, 0.0)
        variance = max(self.sums_sq[name] - self.n * mean**2, 0.0) / (self.n - 1)
        return Estimate(mean, math.sqrt(variance / self.n))

    def time_weighted_cdf(self) -> np.ndarray:
        """Share of simulated time spent with pool time below each grid point."""
        return self.time_below / self.sum_gap


@dataclass
class SimStats:
    """Estimates from a simulation run (or a merged ensemble)."""

    model: str
    tstar: ThresholdTime
    seed: Dict[str, Any]
    n_blocks_recorded: int
    user_welfare_hat: Estimate
    miner_revenue_hat: Estimate
    miner_profit_flow_hat: Estimate
    social_welfare_hat: Estimate
    mean_block_fee_hat: Estimate
    validated_mass_per_block: float
    ks_distance: float
    hist_edges: np.ndarray
    hist_mass: np.ndarray

    @property
    def hist_density(self) -> np.ndarray:
        return self.hist_mass / np.diff(self.hist_edges)

    def histogram_rows(self) -> List[Tuple[float, float, float, float]]:
        """(left, right, mass, density) per bin."""
        density = self.hist_density
        return [
            (float(self.hist_edges[i]), float(self.hist_edges[i + 1]), float(self.hist_mass[i]), float(density[i]))
            for i in range(self.hist_mass.size)
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "tstar": self.tstar.to_json(),
            "seed": self.seed,
            "n_blocks_recorded": self.n_blocks_recorded,
            "user_welfare_hat": self.user_welfare_hat.to_dict(),
            "miner_revenue_hat": self.miner_revenue_hat.to_dict(),
            "miner_profit_flow_hat": self.miner_profit_flow_hat.to_dict(),
            "social_welfare_hat": self.social_welfare_hat.to_dict(),
            "mean_block_fee_hat": self.mean_block_fee_hat.to_dict(),
            "validated_mass_per_block": self.validated_mass_per_block,
            "ks_distance": self.ks_distance,
            "histogram_mass": float(self.hist_mass.sum()),
        }


def validated_cells(
    n_cells: Union[int, np.ndarray], capacity_cells: int
) -> Tuple[Union[int, np.ndarray], Union[int, np.ndarray]]:
    """
    Greedy selection: the block takes the newest cells (highest bids) first.

    A cell is validated only if it fits entirely, so at most capacity_cells
    are taken and they always form a suffix [start, stop) of the pool.
    """
    stop = n_cells
    start = np.maximum(np.asarray(n_cells) - capacity_cells, 0)
    if np.ndim(n_cells) == 0:
        return int(start), int(stop)
    return start, stop


def _record_grid(tstar: ThresholdTime, p: MarketParams, bins: int) -> np.ndarray:
    head = tstar.value if tstar.is_finite else 0.0
    slowest = p.lam if tstar.kind is not ThresholdKind.NEVER_OPERATE else p.eta * p.lam
    if tstar.is_finite and p.eta > 0:
        slowest = min(slowest, p.eta * p.lam)
    upper = head + _HIST_LIFETIMES / slowest
    return np.linspace(0.0, upper, bins + 1)


def _draw_gaps(tstar: ThresholdTime, p: MarketParams, rs: RandomSource, size: int) -> np.ndarray:
    """Block gaps: rate eta*lambda before the threshold, lambda after."""
    if tstar.kind is ThresholdKind.NEVER_SUSPEND:
        return sample_exponential(rs, p.lam, size)
    if tstar.kind is ThresholdKind.NEVER_OPERATE:
        return sample_exponential(rs, p.eta * p.lam, size)

    cut = tstar.value
    if p.eta == 0:
        # no arrivals before the threshold: start the exponential clock there
        return cut + sample_exponential(rs, p.lam, size)
    early = sample_exponential(rs, p.eta * p.lam, size)
    late = cut + sample_exponential(rs, p.lam, size)
    return np.where(early < cut, early, late)


def _operating_time(gaps: np.ndarray, tstar: ThresholdTime, p: MarketParams) -> np.ndarray:
    """Miner mass times operating time within each cycle."""
    if tstar.kind is ThresholdKind.NEVER_SUSPEND:
        return gaps.copy()
    if tstar.kind is ThresholdKind.NEVER_OPERATE:
        return p.eta * gaps
    return p.eta * gaps + (1.0 - p.eta) * np.maximum(gaps - tstar.value, 0.0)


def _cell_bids(n_cells: int, dt: float, tstar: ThresholdTime, p: MarketParams) -> np.ndarray:
    midpoints = (np.arange(n_cells) + 0.5) * dt
    if n_cells == 0:
        return midpoints
    if tstar.kind is ThresholdKind.NEVER_SUSPEND:
        return np.asarray(uc_bid(midpoints, p))
    return eo_bid_curve(midpoints, tstar, p).values


def _run_accumulator(p: MarketParams, tstar: ThresholdTime, cfg: SimConfig) -> SimAccumulator:
    gaps = _draw_gaps(tstar, p, cfg.rs.fresh(), cfg.n_blocks)[cfg.burn_in :]

    n_cells = np.floor(gaps / cfg.dt).astype(np.int64)
    capacity_cells = int(math.floor(p.capacity / cfg.dt + 1e-9))
    start, stop = validated_cells(n_cells, capacity_cells)

    bids = _cell_bids(int(n_cells.max()), cfg.dt, tstar, p)
    cumulative = np.concatenate(([0.0], np.cumsum(bids)))

    fee = cfg.dt * (cumulative[stop] - cumulative[start])
    validated = cfg.dt * (stop - start)
    operating = _operating_time(gaps, tstar, p)
    metrics = {
        "fee": fee,
        "surplus": validated - fee,
        "validated": validated,
        "operating": operating,
        "profit": fee + p.reward - p.cost * operating,
        "welfare": validated - p.cost * operating,
    }

    acc = SimAccumulator(grid=_record_grid(tstar, p, cfg.hist_bins))
    acc.add(gaps, metrics)
    return acc


def _analytic_cdf(model: str, tstar: ThresholdTime, p: MarketParams):
    if model == "uc":
        return lambda x: np.asarray(uc_stationary_cdf(x, p))
    return lambda x: np.asarray(stationary_cdf(x, tstar, p))


def summarize(acc: SimAccumulator, model: str, tstar: ThresholdTime, p: MarketParams, seed: Dict[str, Any]) -> SimStats:
    """Turn accumulated sums into estimates, histogram and KS distance."""
    cdf = acc.time_weighted_cdf()
    mass = np.diff(cdf)
    mass[-1] = 1.0 - cdf[-2]

    stats = SimStats(
        model=model,
        tstar=tstar,
        seed=seed,
        n_blocks_recorded=acc.n,
        user_welfare_hat=acc.rate("surplus"),
        miner_revenue_hat=acc.rate("fee"),
        miner_profit_flow_hat=acc.rate("profit"),
        social_welfare_hat=acc.rate("welfare"),
        mean_block_fee_hat=acc.per_block("fee"),
        validated_mass_per_block=acc.sums["validated"] / acc.n,
        ks_distance=ks_distance(acc.grid, cdf, _analytic_cdf(model, tstar, p)),
        hist_edges=acc.grid,
        hist_mass=mass,
    )
    logger.info(
        "%s run: %d blocks, U=%.6f R=%.6f KS=%.4g",
        model,
        stats.n_blocks_recorded,
        stats.user_welfare_hat.value,
        stats.miner_revenue_hat.value,
        stats.ks_distance,
    )
    return stats


def _simulate(p: MarketParams, tstar: ThresholdTime, cfg: SimConfig, model: str) -> SimStats:
    cfg.check_against(p)
    check_bid_domain(tstar, p)
    with ExecutionTracker.track(f"simulate_{model}", n_blocks=cfg.n_blocks, dt=cfg.dt, seed=cfg.rs.seed):
        acc = _run_accumulator(p, tstar, cfg)
        return summarize(acc, model, tstar, p, cfg.rs.to_dict())


def simulate_uc(p: MarketParams, cfg: SimConfig) -> SimStats:
    """
    Simulate the user-competition market: miners always operate.

    Raises:
        BadConfigError: If dt > K/100
    """
    return _simulate(p, ThresholdTime.never_suspend(), cfg, "uc")


def simulate_eo(p: MarketParams, tstar: ThresholdTime, cfg: SimConfig) -> SimStats:
    """
    Simulate the endogenous-operation market under threshold tstar.

    Raises:
        BadConfigError: If dt > K/100
        DomainError: If eta = 0 and tstar is not a finite time in [0, K)
    """
    return _simulate(p, ThresholdTime.parse(tstar), cfg, "eo")


def _ensemble_worker(args) -> SimAccumulator:
    p, tstar, cfg = args
    return _run_accumulator(p, tstar, cfg)


def run_ensemble(
    p: MarketParams,
    tstar: ThresholdTime,
    cfg: SimConfig,
    n_runs: int,
    threads: int = 1,
    model: str = "eo",
) -> SimStats:
    """
    Independent runs on stream ids 0..n_runs-1, merged into one SimStats.

    The merged result does not depend on threads.
    """
    if n_runs < 1:
        raise BadConfigError(f"n_runs must be >= 1, got {n_runs}")
    if model not in ("uc", "eo"):
        raise InvalidParameterError(f"unknown model {model!r}")
    tstar = ThresholdTime.never_suspend() if model == "uc" else ThresholdTime.parse(tstar)
    cfg.check_against(p)
    check_bid_domain(tstar, p)

    jobs = [(p, tstar, cfg.with_stream(i)) for i in range(n_runs)]
    with ExecutionTracker.track("run_ensemble", n_runs=n_runs, threads=threads):
        if threads > 1:
            with Pool(threads) as pool:
                parts = pool.map(_ensemble_worker, jobs)
        else:
            parts = [_ensemble_worker(job) for job in jobs]

    merged = parts[0]
    for part in parts[1:]:
        merged = merged.merge(part)
    seed = {"seed": int(cfg.rs.seed), "stream_ids": list(range(n_runs))}
    return summarize(merged, model, tstar, p, seed)


# ---------------------------------------------------------------------------
# Best-response scan
# ---------------------------------------------------------------------------


def best_response_scan(t: float, tstar: ThresholdTime, p: MarketParams, n_points: int) -> DeviationScan:
    """
    Tabulate W(s) (1 - beta(t - s)) over s in [-t, K].

    Reporting as a later user (s < 0) outbids the pool; s > t asks for a zero
    bid, so the bid argument is clamped at 0.
    """
    if t < 0:
        raise InvalidParameterError(f"t must be >= 0, got {t}")
    if n_points < 3:
        raise InvalidParameterError(f"n_points must be >= 3, got {n_points}")

    threshold = ThresholdTime.parse(tstar)
    s = np.linspace(-t, p.capacity, n_points)
    reported = np.maximum(t - s, 0.0)
    if threshold.kind is ThresholdKind.NEVER_SUSPEND:
        payoff = np.asarray(uc_w(s, p)) * (1.0 - np.asarray(uc_bid(reported, p)))
    else:
        lead = threshold.as_float() - t
        payoff = np.asarray(eo_w(s, np.full_like(s, lead), p)) * (1.0 - np.asarray(eo_bid(reported, threshold, p)))

    return DeviationScan(s=s, payoff=payoff, argmax_s=pick_argmax(s, payoff), step=float(s[1] - s[0]))
