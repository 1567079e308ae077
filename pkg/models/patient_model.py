"""
Patient-user model.
Unvalidated requests stay in the pool and payoffs are discounted at rate rho.
Monte Carlo estimate of the expected discount factor W~(s) until validation
for a request with s units of higher-bid mass ahead, checks of its delay
differential equation and bounds, the candidate equilibrium bid and
deviation-payoff scans.
"""
import logging
import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from config.config import DEFAULT_PATIENT_BATCH, DEFAULT_PATIENT_MAX_BLOCKS
from helpers.errors import BadConfigError, GridTooCoarseError, InsufficientCurveError, InvalidParameterError
from helpers.numerics import RandomSource, central_difference, sample_exponential
from helpers.observability import ExecutionTracker
from models.params import BidCurve, DeviationScan, MarketParams, clamp_bid, pick_argmax

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Block gaps are drawn this many columns at a time until every path has cleared the grid
_COLUMN_CHUNK = 32

# ODE check passes when this share of non-kink points sits within PASS_SIGMAS of zero
PASS_SHARE = 0.95
PASS_SIGMAS = 5.0


@dataclass
class DiscountCurve:
    """
    Estimated W~(s) on an increasing grid.

    Attributes:
        grid: Offsets s
        estimates: Mean of e^{-rho T} per offset
        std_errors: Monte Carlo standard errors
        n_paths: Paths behind every estimate
        capacity: Block capacity K the curve was simulated with
        truncated: Paths still unvalidated at the largest offset after max_blocks blocks
    """

    grid: np.ndarray
    estimates: np.ndarray
    std_errors: np.ndarray
    n_paths: int
    capacity: float = 1.0
    truncated: int = 0

    @property
    def spacing(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def at(self, s: ArrayLike) -> ArrayLike:
        """Linear interpolation of the estimates."""
        return np.interp(s, self.grid, self.estimates)

    def std_error_at(self, s: ArrayLike) -> ArrayLike:
        return np.interp(s, self.grid, self.std_errors)

    def delayed(self, s: ArrayLike) -> np.ndarray:
        """W~*(s): the curve for s >= 0, one below zero."""
        s = np.asarray(s, dtype=float)
        return np.where(s < 0, 1.0, np.interp(s, self.grid, self.estimates))

    def rows(self) -> List[tuple]:
        return list(zip(self.grid.tolist(), self.estimates.tolist(), self.std_errors.tolist()))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_paths": self.n_paths,
            "capacity": self.capacity,
            "truncated": self.truncated,
            "grid_min": float(self.grid[0]),
            "grid_max": float(self.grid[-1]),
            "points": int(self.grid.size),
        }


def default_grid(p: MarketParams) -> np.ndarray:
    """s in [-12K, 4K] with spacing K/50."""
    return np.linspace(-12.0 * p.capacity, 4.0 * p.capacity, 801)


def _batch_sums(p: MarketParams, grid: np.ndarray, n_paths: int, rs: RandomSource, max_blocks: int):
    """
    Per-offset sum and sum of squares of e^{-rho T} over one batch of paths.

    Every path is shared by all offsets. After n blocks the request at s has
    been validated iff max_{j<=n} (jK - S_j) >= s, with S_j the arrival time of
    block j, so each block validates a contiguous run of grid points and the
    contributions are scattered with difference arrays.
    """
    size = grid.size
    total = np.zeros(size + 1)
    total_sq = np.zeros(size + 1)
    elapsed = np.zeros(n_paths)
    best = np.full(n_paths, -np.inf)
    reached = np.zeros(n_paths, dtype=np.int64)

    blocks = 0
    while blocks < max_blocks:
        width = min(_COLUMN_CHUNK, max_blocks - blocks)
        times = elapsed[:, None] + np.cumsum(sample_exponential(rs, p.lam, (n_paths, width)), axis=1)
        drift = p.capacity * (blocks + 1 + np.arange(width)) - times
        drift[:, 0] = np.maximum(drift[:, 0], best)
        peaks = np.maximum.accumulate(drift, axis=1)

        now = np.searchsorted(grid, peaks, side="right")
        before = np.column_stack((reached, now[:, :-1]))
        discount = np.exp(-p.rho * times)

        total += np.bincount(before.ravel(), weights=discount.ravel(), minlength=size + 1)
        total -= np.bincount(now.ravel(), weights=discount.ravel(), minlength=size + 1)
        total_sq += np.bincount(before.ravel(), weights=(discount**2).ravel(), minlength=size + 1)
        total_sq -= np.bincount(now.ravel(), weights=(discount**2).ravel(), minlength=size + 1)

        elapsed, best, reached = times[:, -1], peaks[:, -1], now[:, -1]
        blocks += width
        if reached.min() == size:
            break

    truncated = int(np.count_nonzero(reached < size))
    return np.cumsum(total)[:size], np.cumsum(total_sq)[:size], truncated


def _batch_worker(args):
    p, grid, n_paths, rs, max_blocks = args
    return _batch_sums(p, grid, n_paths, rs, max_blocks)


def estimate_wtilde(
    p: MarketParams,
    grid: Optional[Sequence[float]],
    n_paths: int,
    rs: RandomSource,
    max_blocks: int = DEFAULT_PATIENT_MAX_BLOCKS,
    batch_size: int = DEFAULT_PATIENT_BATCH,
    threads: int = 1,
) -> DiscountCurve:
    """
    Estimate W~(s) = E[e^{-rho T} | s] by simulating block gaps.

    Paths run in batches seeded by rs.child(batch), so the estimate does not
    depend on threads. Paths still unvalidated after max_blocks blocks
    contribute zero.

    Args:
        p: Market parameters (lam, capacity, rho)
        grid: Strictly increasing offsets; None selects default_grid(p)
        n_paths: Number of simulated paths, >= 1
        rs: Random stream
        max_blocks: Truncation horizon per path
        batch_size: Paths per batch
        threads: Worker processes for batches

    Returns:
        DiscountCurve, nonincreasing in s

    Raises:
        BadConfigError: If n_paths, batch_size, max_blocks or the grid are invalid
    """
    grid = default_grid(p) if grid is None else np.asarray(grid, dtype=float)
    if n_paths < 1:
        raise BadConfigError(f"n_paths must be >= 1, got {n_paths}")
    if batch_size < 1 or max_blocks < 1:
        raise BadConfigError("batch_size and max_blocks must be >= 1")
    if grid.ndim != 1 or grid.size < 2 or not np.all(np.isfinite(grid)):
        raise BadConfigError("grid must be a finite 1-D array with at least two points")
    if np.any(np.diff(grid) <= 0):
        raise BadConfigError("grid must be strictly increasing")

    counts = [min(batch_size, n_paths - start) for start in range(0, n_paths, batch_size)]
    jobs = [(p, grid, count, rs.child(b), max_blocks) for b, count in enumerate(counts)]

    with ExecutionTracker.track("estimate_wtilde", n_paths=n_paths, batches=len(jobs), seed=rs.seed):
        if threads > 1:
            with Pool(threads) as pool:
                parts = pool.map(_batch_worker, jobs)
        else:
            parts = [_batch_worker(job) for job in jobs]

    total = sum(part[0] for part in parts)
    total_sq = sum(part[1] for part in parts)
    truncated = sum(part[2] for part in parts)

    mean = total / n_paths
    if n_paths > 1:
        variance = np.maximum(total_sq - n_paths * mean**2, 0.0) / (n_paths - 1)
        std_errors = np.sqrt(variance / n_paths)
    else:
        std_errors = np.zeros_like(mean)

    if truncated:
        logger.info("%d of %d paths hit the %d-block horizon", truncated, n_paths, max_blocks)
    return DiscountCurve(
        grid=grid,
        estimates=mean,
        std_errors=std_errors,
        n_paths=n_paths,
        capacity=p.capacity,
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# Properties of the estimated curve
# ---------------------------------------------------------------------------


@dataclass
class OdeResidualReport:
    """Residuals of W~'(s) - (rho + lambda) W~(s) + lambda W~*(s - K) at non-kink points."""

    grid: np.ndarray
    residuals: np.ndarray
    sigmas: np.ndarray
    kink_guard: float
    noise_floor: float
    pass_share: float
    passed: bool
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": "OK",
            "points": int(self.grid.size),
            "kink_guard": self.kink_guard,
            "noise_floor": self.noise_floor,
            "max_abs_residual": float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0,
            "pass_share": self.pass_share,
            "passed": self.passed,
            "notes": list(self.notes),
        }


def wtilde_ode_residual(
    curve: DiscountCurve,
    p: MarketParams,
    kink_guard: Optional[float] = None,
    abs_floor: float = 1e-9,
) -> OdeResidualReport:
    """
    Check the delay ODE on a uniform grid with central differences.

    Points within kink_guard of a multiple of K are skipped; a point passes
    when |residual| <= 5 sigma + abs_floor, sigma propagated from the
    per-point standard errors as if they were independent.

    Raises:
        GridTooCoarseError: If the spacing exceeds K/20
        BadConfigError: If the grid is not uniform or kink_guard <= spacing
    """
    grid = curve.grid
    spacing = curve.spacing
    if not np.allclose(np.diff(grid), spacing, rtol=1e-6, atol=1e-12):
        raise BadConfigError("ODE residuals need a uniform grid")
    if spacing > p.capacity / 20:
        raise GridTooCoarseError(f"grid spacing {spacing} exceeds K/20 = {p.capacity / 20}")
    kink_guard = 2.5 * spacing if kink_guard is None else kink_guard
    if kink_guard <= spacing:
        raise BadConfigError(f"kink_guard ({kink_guard}) must exceed the grid spacing ({spacing})")

    s = grid[1:-1]
    nearest_kink = np.round(s / p.capacity) * p.capacity
    keep = np.abs(s - nearest_kink) >= kink_guard
    shifted = s - p.capacity
    keep &= (shifted < 0) | (shifted >= grid[0])

    idx = np.arange(1, grid.size - 1)[keep]
    s = grid[idx]
    est, se = curve.estimates, curve.std_errors
    slope = (est[idx + 1] - est[idx - 1]) / (2 * spacing)
    delayed = curve.delayed(s - p.capacity)
    delayed_se = np.where(s - p.capacity < 0, 0.0, curve.std_error_at(s - p.capacity))

    rate = p.rho + p.lam
    residuals = slope - rate * est[idx] + p.lam * delayed
    sigmas = np.sqrt(
        (se[idx + 1] ** 2 + se[idx - 1] ** 2) / (4 * spacing**2) + (rate * se[idx]) ** 2 + (p.lam * delayed_se) ** 2
    )

    ok = np.abs(residuals) <= PASS_SIGMAS * sigmas + abs_floor
    share = float(np.mean(ok)) if ok.size else 0.0
    report = OdeResidualReport(
        grid=s,
        residuals=residuals,
        sigmas=sigmas,
        kink_guard=float(kink_guard),
        noise_floor=float(np.median(sigmas)) if sigmas.size else 0.0,
        pass_share=share,
        passed=bool(ok.size and share >= PASS_SHARE),
    )
    if not report.passed:
        report.notes.append(f"only {share:.1%} of points within {PASS_SIGMAS:g} sigma")
    return report


@dataclass
class LadderRung:
    n: int
    bound: float
    max_estimate: float
    max_std_error: float
    holds: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "bound": self.bound,
            "max_estimate": self.max_estimate,
            "max_std_error": self.max_std_error,
            "holds": self.holds,
        }


def bound_ladder(curve: DiscountCurve, p: MarketParams, n_max: int = 3) -> List[LadderRung]:
    """For each n <= n_max: max of W~ over s >= nK against (lambda/(rho+lambda))^{n+1} + 3 SE."""
    base = p.lam / (p.rho + p.lam)
    rungs = []
    for n in range(n_max + 1):
        mask = curve.grid >= n * p.capacity
        if not np.any(mask):
            continue
        bound = base ** (n + 1)
        top = float(np.max(curve.estimates[mask]))
        spread = float(np.max(curve.std_errors[mask]))
        rungs.append(LadderRung(n, bound, top, spread, top <= bound + 3 * spread))
    return rungs


def left_limit_gap(curve: DiscountCurve, p: MarketParams) -> Dict[str, Optional[float]]:
    """
    Distance of the leftmost estimate from lambda/(rho+lambda), in standard errors.

    sigmas is None when the curve carries no standard error there.
    """
    limit = p.lam / (p.rho + p.lam)
    se = float(curve.std_errors[0])
    gap = float(curve.estimates[0]) - limit
    return {"s": float(curve.grid[0]), "limit": limit, "gap": gap, "sigmas": abs(gap) / se if se > 0 else None}


# ---------------------------------------------------------------------------
# Equilibrium bid and deviation scans
# ---------------------------------------------------------------------------


def _local_rate(curve: DiscountCurve, step: float) -> float:
    slope = central_difference(lambda x: float(curve.at(x)), 0.0, step)
    return slope / float(curve.at(0.0))


def _resolution_gap(curve: DiscountCurve) -> None:
    """
    Compare raw-grid central quotients at the sample nearest zero over one and two spacings.

    Raises:
        InsufficientCurveError: If they differ by more than 1% beyond three standard errors
    """
    grid, est, se = curve.grid, curve.estimates, curve.std_errors
    i0 = int(np.argmin(np.abs(grid)))
    if i0 < 2 or i0 + 2 >= grid.size:
        raise InsufficientCurveError("curve needs two grid points on each side of s = 0")
    d1 = grid[i0 + 1] - grid[i0 - 1]
    d2 = grid[i0 + 2] - grid[i0 - 2]
    q1 = (est[i0 + 1] - est[i0 - 1]) / d1
    q2 = (est[i0 + 2] - est[i0 - 2]) / d2
    # treats the four estimates as independent
    sigma = math.sqrt((se[i0 + 1] ** 2 + se[i0 - 1] ** 2) / d1**2 + (se[i0 + 2] ** 2 + se[i0 - 2] ** 2) / d2**2)
    gap = abs(q2 - q1)
    if gap > 0.01 * abs(q1) + 3.0 * sigma:
        raise InsufficientCurveError(
            f"slope at s = 0 is {q1:.4g} over one grid spacing and {q2:.4g} over two; refine the grid"
        )


def bid_rate(curve: DiscountCurve, step: Optional[float] = None) -> float:
    """
    W~'(0) / W~(0), the (negative) exponent rate of the equilibrium bid.

    Raises:
        InsufficientCurveError: If the grid does not resolve a neighbourhood of zero
            or the slope there still depends on the grid spacing
    """
    step = curve.capacity / 200 if step is None else step
    grid = curve.grid
    if grid[0] > -step or grid[-1] < step:
        raise InsufficientCurveError(f"curve must cover [-{step}, {step}]")
    reach = curve.capacity / 20
    if grid[grid < 0].max() < -reach or grid[grid > 0].min() > reach:
        raise InsufficientCurveError(f"curve needs points within {reach} on both sides of s = 0")
    if float(curve.at(0.0)) <= 0:
        raise InsufficientCurveError("estimate at s = 0 is zero; increase n_paths")

    rate = _local_rate(curve, step)
    if rate >= 0:
        raise InsufficientCurveError(f"estimated slope at s = 0 is not negative ({rate:.3g}); increase n_paths")
    _resolution_gap(curve)
    return rate


def patient_bid(t: ArrayLike, curve: DiscountCurve, rate: Optional[float] = None) -> ArrayLike:
    """
    Candidate equilibrium bid 1 - exp(t W~'(0) / W~(0)).

    Args:
        t: Pool time(s), >= 0
        curve: Estimated discount curve
        rate: Precomputed bid_rate(curve)
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise InvalidParameterError("pool time must be >= 0")
    rate = bid_rate(curve) if rate is None else rate
    values = clamp_bid(-np.expm1(rate * t_arr))
    if np.ndim(t) == 0:
        return float(values)
    return values


def patient_bid_curve(grid: Sequence[float], curve: DiscountCurve) -> BidCurve:
    grid = np.asarray(grid, dtype=float)
    return BidCurve(grid=grid, values=np.asarray(patient_bid(grid, curve), dtype=float))


def patient_payoff_scan(t: float, curve: DiscountCurve, n_points: int) -> DeviationScan:
    """
    Tabulate W~(s)(1 - beta~(t - s)) over s in [-t, s_max].

    Near-ties within three standard errors of the maximum resolve toward s = 0.

    Raises:
        InsufficientCurveError: If the curve does not reach down to -t
    """
    if t < 0:
        raise InvalidParameterError(f"t must be >= 0, got {t}")
    if n_points < 3:
        raise InvalidParameterError(f"n_points must be >= 3, got {n_points}")
    if curve.grid[0] > -t:
        raise InsufficientCurveError(f"curve starts at {curve.grid[0]}, scan needs s >= {-t}")

    rate = bid_rate(curve)
    s = np.linspace(-t, float(curve.grid[-1]), n_points)
    keep = 1.0 - np.asarray(patient_bid(np.maximum(t - s, 0.0), curve, rate))
    payoff = np.asarray(curve.at(s)) * keep
    noise = np.asarray(curve.std_error_at(s)) * keep

    best = int(np.argmax(payoff))
    tie_tol = 3.0 * float(noise[best])
    return DeviationScan(
        s=s,
        payoff=payoff,
        argmax_s=pick_argmax(s, payoff, max(tie_tol, 1e-12)),
        step=float(s[1] - s[0]),
        tie_tol=tie_tol,
    )
