"""
Endogenous-operation model.
Miners suspend below a threshold pool time and operate above it; committed
miners (mass eta) always operate. Equilibrium bids, miner surplus, threshold
times, stationary law, social welfare, the welfare-optimal block reward and
parameter sweeps.
"""
import logging
import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.special import xlogy

from helpers.errors import DomainError, FeeMarketError, InvalidParameterError, MaxIterError
from helpers.numerics import Tolerance, bisect, integrate
from models.params import BidCurve, MarketParams, ThresholdKind, ThresholdTime, clamp_bid
from models.uc_model import T_CAP, bid_rate, uc_bid, uc_user_welfare, validation_probability_zero

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]
ThresholdLike = Union[ThresholdTime, float, str]

# Inner integrals are nested inside outer ones; keep them well below the outer targets.
_BID_TOL = Tolerance(abs_tol=1e-12, rel_tol=1e-12)
_SURPLUS_TOL = Tolerance(abs_tol=1e-13, rel_tol=1e-12)
_OUTER_TOL = Tolerance(abs_tol=1e-9, rel_tol=1e-9)

# Upper bracket for t^E at eta = 0 stays strictly inside [0, K)
THRESHOLD_EPS = 1e-12

# Exponential tails are cut after this many mean lifetimes
_TAIL_LIFETIMES = 40.0

SWEEP_PARAMETERS = ("lambda", "capacity", "cost", "reward")

STATIONARY_DENSITY_NOTE = (
    "stationary density before the threshold uses the normalising constant "
    "lambda/(1+lambda*t*); the form lambda*t*/(1+lambda*t*) does not integrate to one"
)


def _as_threshold(tstar: ThresholdLike) -> ThresholdTime:
    return ThresholdTime.parse(tstar)


def _scalar_or_array(values: np.ndarray, like: ArrayLike) -> ArrayLike:
    if np.ndim(like) == 0:
        return float(values)
    return values


# ---------------------------------------------------------------------------
# Validation probability and bids
# ---------------------------------------------------------------------------


def eo_w(s: ArrayLike, l: ArrayLike, p: MarketParams) -> ArrayLike:
    """
    Validation probability W(s, l) when operation starts l units of time from now.

    Branches: committed miners only (K - s <= l), mixed (0 <= l < K - s),
    everyone operating (l < 0).
    """
    s_arr = np.asarray(s, dtype=float)
    l_arr = np.asarray(l, dtype=float)
    gap = p.capacity - s_arr
    lam, eta = p.lam, p.eta

    with np.errstate(invalid="ignore"):
        committed = -np.expm1(-eta * lam * np.maximum(gap, 0.0))
        mixed = -np.expm1(-eta * lam * np.maximum(l_arr, 0.0) - lam * np.maximum(gap - l_arr, 0.0))
        operating = -np.expm1(-lam * np.maximum(gap, 0.0))

    value = np.where(l_arr < 0, operating, np.where(gap <= l_arr, committed, mixed))
    return _scalar_or_array(value, s if np.ndim(s) else l)


def eo_hazard(l: ArrayLike, p: MarketParams) -> ArrayLike:
    """
    W_1(0, l) / W(0, l), the bid hazard seen l units of time before operation starts.

    Continuous at l = 0. At l = K it jumps by the factor eta: only the
    committed miners remain, so the hazard is eta times its left limit
    (-inf on the committed branch when eta = 0).
    """
    l_arr = np.asarray(l, dtype=float)
    lam, eta, k = p.lam, p.eta, p.capacity

    with np.errstate(divide="ignore", invalid="ignore"):
        if eta > 0:
            committed_rate = eta * lam * np.exp(-eta * lam * k) / -np.expm1(-eta * lam * k)
        else:
            committed_rate = np.inf
        exponent = eta * lam * np.clip(l_arr, 0.0, k) + lam * (k - np.clip(l_arr, 0.0, k))
        mixed_rate = lam * np.exp(-exponent) / -np.expm1(-exponent)

    hazard = np.where(l_arr < 0, -bid_rate(p), np.where(l_arr >= k, -committed_rate, -mixed_rate))
    return _scalar_or_array(hazard, l)


def _closed_form_bid(t: np.ndarray, tstar: float, p: MarketParams) -> np.ndarray:
    lam, k = p.lam, p.capacity
    lead = math.exp(-lam * (k - tstar))
    before = lead * -np.expm1(-lam * np.maximum(t, 0.0)) / -np.expm1(-lam * (k + np.minimum(t, tstar) - tstar))
    scale = -math.expm1(-lam * (k - tstar)) / validation_probability_zero(p)
    after = 1.0 - scale * np.exp(-bid_rate(p) * np.maximum(t - tstar, 0.0))
    return clamp_bid(np.where(t < tstar, before, after))


def _quadrature_bid(t: float, tstar: float, p: MarketParams) -> float:
    if t <= 0:
        return 0.0
    log_survival = integrate(
        lambda tau: eo_hazard(tstar - tau, p), 0.0, t, tol=_BID_TOL, points=(tstar - p.capacity, tstar)
    )
    return float(clamp_bid(-math.expm1(log_survival)))


def check_bid_domain(threshold: ThresholdTime, p: MarketParams) -> None:
    if p.eta > 0 or threshold.kind is ThresholdKind.NEVER_SUSPEND:
        return
    if threshold.kind is ThresholdKind.NEVER_OPERATE:
        raise DomainError("with eta = 0 and miners never operating no bid is ever validated")
    if threshold.value >= p.capacity:
        raise DomainError(f"with eta = 0 the threshold must lie in [0, K); got {threshold.value} >= {p.capacity}")


def eo_bid(t: ArrayLike, tstar: ThresholdLike, p: MarketParams) -> ArrayLike:
    """
    Equilibrium bid of the time-t user when operation starts at tstar.

    Args:
        t: Pool time(s), t >= 0
        tstar: Threshold time (finite, never_suspend or never_operate)
        p: Market parameters

    Returns:
        Bid(s) in [0, 1)

    Raises:
        DomainError: If eta = 0 and tstar is not a finite time in [0, K)
    """
    threshold = _as_threshold(tstar)
    check_bid_domain(threshold, p)
    if threshold.kind is ThresholdKind.NEVER_SUSPEND:
        return uc_bid(t, p)

    t_arr = np.minimum(np.asarray(t, dtype=float), T_CAP)
    if p.eta == 0:
        return _scalar_or_array(_closed_form_bid(t_arr, threshold.value, p), t)

    cut = threshold.as_float()
    values = np.array([_quadrature_bid(float(x), cut, p) for x in np.atleast_1d(t_arr)])
    return _scalar_or_array(values.reshape(t_arr.shape), t)


def eo_bid_curve(grid: Sequence[float], tstar: ThresholdLike, p: MarketParams) -> BidCurve:
    """
    Sample the equilibrium bid on an increasing grid.

    With eta > 0 the hazard integral is accumulated segment by segment, so
    a long grid costs one short quadrature per point.
    """
    threshold = _as_threshold(tstar)
    grid = np.asarray(grid, dtype=float)
    if p.eta == 0 or threshold.kind is ThresholdKind.NEVER_SUSPEND:
        return BidCurve(grid=grid, values=np.asarray(eo_bid(grid, threshold, p), dtype=float))

    cut = threshold.as_float()
    kinks = (cut - p.capacity, cut)
    log_survival = np.empty(grid.size)
    running = 0.0
    previous = 0.0
    for i, point in enumerate(grid):
        running += integrate(lambda tau: eo_hazard(cut - tau, p), previous, point, tol=_BID_TOL, points=kinks)
        log_survival[i] = running
        previous = point
    return BidCurve(grid=grid, values=clamp_bid(-np.expm1(log_survival)))


# ---------------------------------------------------------------------------
# Miner surplus and block revenue
# ---------------------------------------------------------------------------


def _closed_form_surplus(tstar: float, p: MarketParams) -> float:
    lam, k = p.lam, p.capacity
    lead = math.exp(-lam * (k - tstar))
    unvalidated = -math.expm1(-lam * (k - tstar))
    log_w0 = math.log(validation_probability_zero(p))
    return lead * tstar + (float(xlogy(unvalidated, unvalidated)) - unvalidated * log_w0) / lam


def _quadrature_surplus(tstar: float, p: MarketParams) -> float:
    threshold = ThresholdTime.finite(tstar)
    lower = max(tstar - p.capacity, 0.0)
    if p.eta == 0:
        check_bid_domain(threshold, p)
        return integrate(lambda t: eo_bid(t, threshold, p), lower, tstar, tol=_SURPLUS_TOL)
    return integrate(lambda t: _quadrature_bid(t, tstar, p), lower, tstar, tol=_OUTER_TOL)


def miner_surplus(tstar: float, p: MarketParams, method: str = "auto") -> float:
    """
    M*(t*): fees collected by a block produced exactly at the threshold time.

    Args:
        tstar: Threshold time, >= 0
        p: Market parameters
        method: 'closed_form' (eta = 0, t* in [0, K]), 'quadrature', or 'auto'

    Returns:
        Nonnegative surplus

    Raises:
        DomainError: If the requested method does not apply
    """
    if not tstar >= 0 or math.isinf(tstar):
        raise DomainError(f"miner surplus needs a finite threshold >= 0, got {tstar}")
    if method not in ("auto", "closed_form", "quadrature"):
        raise InvalidParameterError(f"unknown surplus method {method!r}")

    closed_form_ok = p.eta == 0 and tstar <= p.capacity
    if method == "closed_form" and not closed_form_ok:
        raise DomainError("closed-form surplus needs eta = 0 and t* in [0, K]")
    if method == "closed_form" or (method == "auto" and closed_form_ok):
        return _closed_form_surplus(tstar, p)
    return _quadrature_surplus(tstar, p)


def block_fee_income(t: float, tstar: ThresholdLike, p: MarketParams) -> float:
    """
    M(t; beta^E(., t*)): fees of a block arriving at pool time t.

    Equals miner_surplus(t*) when t = t*.
    """
    threshold = _as_threshold(tstar)
    check_bid_domain(threshold, p)
    if t <= 0:
        return 0.0
    lower = max(t - p.capacity, 0.0)
    kinks = (threshold.as_float(),) if threshold.is_finite else None
    if p.eta == 0 or threshold.kind is ThresholdKind.NEVER_SUSPEND:
        return integrate(lambda x: eo_bid(x, threshold, p), lower, t, tol=_SURPLUS_TOL, points=kinks)
    cut = threshold.as_float()
    return integrate(lambda x: _quadrature_bid(x, cut, p), lower, t, tol=_OUTER_TOL, points=kinks)


# ---------------------------------------------------------------------------
# Block gaps and the stationary law of pool time
# ---------------------------------------------------------------------------


def _gap_rates(threshold: ThresholdTime, p: MarketParams):
    """(rate before threshold, threshold, rate after threshold)."""
    if threshold.kind is ThresholdKind.NEVER_SUSPEND:
        return p.lam, 0.0, p.lam
    if threshold.kind is ThresholdKind.NEVER_OPERATE:
        if p.eta == 0:
            raise DomainError("no blocks arrive when eta = 0 and miners never operate")
        return p.eta * p.lam, math.inf, p.eta * p.lam
    return p.eta * p.lam, threshold.value, p.lam


def _stationary_domain(threshold: ThresholdTime, p: MarketParams) -> None:
    if p.eta == 0 and threshold.is_finite and not 0 <= threshold.value < p.capacity:
        raise DomainError(f"with eta = 0 the stationary law needs t* in [0, K); got {threshold.value}")


def block_gap_survival(t: ArrayLike, tstar: ThresholdLike, p: MarketParams) -> ArrayLike:
    """P(G > t) for the time G between consecutive blocks."""
    threshold = _as_threshold(tstar)
    early, cut, late = _gap_rates(threshold, p)
    t_arr = np.maximum(np.asarray(t, dtype=float), 0.0)
    before = np.exp(-early * np.minimum(t_arr, cut))
    after = np.exp(-late * np.maximum(t_arr - cut, 0.0)) if math.isfinite(cut) else 1.0
    return _scalar_or_array(before * after, t)


def block_gap_density(t: ArrayLike, tstar: ThresholdLike, p: MarketParams) -> ArrayLike:
    threshold = _as_threshold(tstar)
    early, cut, late = _gap_rates(threshold, p)
    t_arr = np.asarray(t, dtype=float)
    rate = np.where(t_arr < cut, early, late)
    density = np.where(t_arr >= 0, rate * np.asarray(block_gap_survival(t_arr, threshold, p)), 0.0)
    return _scalar_or_array(density, t)


def mean_block_gap(tstar: ThresholdLike, p: MarketParams) -> float:
    """E[G], the mean cycle length of the pool-time renewal process."""
    threshold = _as_threshold(tstar)
    early, cut, late = _gap_rates(threshold, p)
    if not math.isfinite(cut):
        return 1.0 / early
    head = cut if early == 0 else -math.expm1(-early * cut) / early
    return head + math.exp(-early * cut) / late


def stationary_density(t: ArrayLike, tstar: ThresholdLike, p: MarketParams) -> ArrayLike:
    """
    Long-run density of pool time under threshold t*.

    With eta = 0: lambda/(1 + lambda t*) on [0, t*), then an exponential tail
    lambda e^{-lambda (t - t*)}/(1 + lambda t*). With eta > 0 the renewal form
    P(G > t)/E[G] is used.

    Raises:
        DomainError: If eta = 0 and t* is outside [0, K)
    """
    threshold = _as_threshold(tstar)
    _stationary_domain(threshold, p)
    t_arr = np.asarray(t, dtype=float)
    density = np.where(
        t_arr >= 0, np.asarray(block_gap_survival(t_arr, threshold, p)) / mean_block_gap(threshold, p), 0.0
    )
    return _scalar_or_array(density, t)


def stationary_cdf(t: ArrayLike, tstar: ThresholdLike, p: MarketParams) -> ArrayLike:
    """Long-run CDF of pool time under threshold t*."""
    threshold = _as_threshold(tstar)
    _stationary_domain(threshold, p)
    early, cut, late = _gap_rates(threshold, p)
    t_arr = np.maximum(np.asarray(t, dtype=float), 0.0)

    def head(x):
        if early == 0:
            return x
        return -np.expm1(-early * x) / early

    clipped = np.minimum(t_arr, cut) if math.isfinite(cut) else t_arr
    mass = head(clipped)
    if math.isfinite(cut):
        tail = math.exp(-early * cut) * -np.expm1(-late * np.maximum(t_arr - cut, 0.0)) / late
        mass = mass + np.where(t_arr > cut, tail, 0.0)
    return _scalar_or_array(np.minimum(mass / mean_block_gap(threshold, p), 1.0), t)


def expected_operating_time(tstar: ThresholdLike, p: MarketParams) -> float:
    """Miner mass times operating time, per cycle, in expectation."""
    threshold = _as_threshold(tstar)
    cycle = mean_block_gap(threshold, p)
    if threshold.kind is ThresholdKind.NEVER_SUSPEND:
        return cycle
    if threshold.kind is ThresholdKind.NEVER_OPERATE:
        return p.eta * cycle
    late = math.exp(-p.eta * p.lam * threshold.value) / p.lam
    return p.eta * cycle + (1.0 - p.eta) * late


def miner_profit_flow(tstar: ThresholdLike, p: MarketParams) -> float:
    """Long-run miner profit per unit time: (E[fee] + y - c E[operating time]) / E[G]."""
    threshold = _as_threshold(tstar)
    per_cycle = expected_block_fee(threshold, p) + p.reward - p.cost * expected_operating_time(threshold, p)
    return per_cycle / mean_block_gap(threshold, p)


def expected_block_fee(tstar: ThresholdLike, p: MarketParams) -> float:
    """E[M(G; beta^E(., t*))]: mean fee income per block over the gap law."""
    threshold = _as_threshold(tstar)
    check_bid_domain(threshold, p)
    early, cut, late = _gap_rates(threshold, p)
    start = cut if (p.eta == 0 and math.isfinite(cut)) else 0.0
    slowest = min(r for r in (early, late) if r > 0)
    upper = (cut if math.isfinite(cut) else 0.0) + _TAIL_LIFETIMES / slowest

    kinks = [p.capacity]
    if math.isfinite(cut):
        kinks += [cut, cut + p.capacity]
    return integrate(
        lambda g: block_fee_income(g, threshold, p) * block_gap_density(g, threshold, p),
        start,
        upper,
        tol=_OUTER_TOL,
        points=kinks,
    )


# ---------------------------------------------------------------------------
# Thresholds and welfare
# ---------------------------------------------------------------------------


def equilibrium_threshold(p: MarketParams, tol: Tolerance = Tolerance()) -> ThresholdTime:
    """
    Equilibrium threshold time t^E.

    never_suspend if lambda y > c; never_operate if lambda (K + y) <= c;
    otherwise the unique root of lambda (M*(t) + y) = c.
    """
    if p.lam * p.reward > p.cost:
        return ThresholdTime.never_suspend()
    if p.lam * (p.capacity + p.reward) <= p.cost:
        return ThresholdTime.never_operate()

    def profit(t: float) -> float:
        return p.lam * (miner_surplus(t, p) + p.reward) - p.cost

    if profit(0.0) >= 0:
        return ThresholdTime.finite(0.0)

    if p.eta == 0:
        hi = p.capacity - THRESHOLD_EPS
    else:
        hi = p.capacity
        for _ in range(tol.max_iter):
            if profit(hi) >= 0:
                break
            hi *= 2.0
        else:
            raise MaxIterError("could not bracket the equilibrium threshold")

    root = bisect(profit, 0.0, hi, tol)
    logger.debug("equilibrium threshold %.12g for %s", root, p)
    return ThresholdTime.finite(root)


def _require_no_committed(p: MarketParams, what: str) -> None:
    if p.eta != 0:
        raise DomainError(f"{what} is defined for eta = 0 only (got eta={p.eta})")


def efficient_payoff_flow(tstar: ArrayLike, p: MarketParams) -> ArrayLike:
    """t* e^{-lambda (K - t*)}: users' and miner's joint gain from starting at t*."""
    t_arr = np.asarray(tstar, dtype=float)
    return _scalar_or_array(t_arr * np.exp(-p.lam * (p.capacity - t_arr)), tstar)


def social_welfare(tstar: float, p: MarketParams) -> float:
    """
    Stationary flow surplus minus flow operation cost.

    SW(t*) = 1 - (e^{-lambda (K - t*)} + c) / (1 + lambda t*).
    """
    _require_no_committed(p, "social welfare")
    if not 0 <= tstar <= p.capacity:
        raise DomainError(f"social welfare needs t* in [0, K]; got {tstar}")
    return 1.0 - (math.exp(-p.lam * (p.capacity - tstar)) + p.cost) / (1.0 + p.lam * tstar)


def social_welfare_quadrature(tstar: float, p: MarketParams) -> float:
    """Integrate (W(0, t* - t) - c 1{t >= t*}) against the stationary density."""
    _require_no_committed(p, "social welfare")
    threshold = ThresholdTime.finite(tstar)
    _stationary_domain(threshold, p)

    def flow(t: float) -> float:
        cost = p.cost if t >= tstar else 0.0
        return (eo_w(0.0, tstar - t, p) - cost) * stationary_density(t, threshold, p)

    upper = tstar + _TAIL_LIFETIMES / p.lam
    return integrate(flow, 0.0, upper, tol=_OUTER_TOL, points=(tstar,))


def welfare_at(threshold: ThresholdLike, p: MarketParams) -> float:
    """Social welfare for any threshold kind; never operating yields zero."""
    threshold = _as_threshold(threshold)
    if threshold.kind is ThresholdKind.NEVER_SUSPEND:
        return social_welfare(0.0, p)
    if threshold.kind is ThresholdKind.NEVER_OPERATE:
        _require_no_committed(p, "social welfare")
        return 0.0
    return social_welfare(threshold.value, p)


def user_welfare_at(threshold: ThresholdLike, p: MarketParams) -> float:
    """Stationary user surplus: validation probability times (1 - bid), averaged over pool time."""
    threshold = _as_threshold(threshold)
    if threshold.kind is ThresholdKind.NEVER_SUSPEND:
        return uc_user_welfare(p)
    if threshold.kind is ThresholdKind.NEVER_OPERATE:
        return 0.0
    tstar = threshold.value
    _stationary_domain(threshold, p)

    def flow(t: float) -> float:
        surplus = eo_w(0.0, tstar - t, p) * (1.0 - eo_bid(t, threshold, p))
        return surplus * stationary_density(t, threshold, p)

    early, cut, late = _gap_rates(threshold, p)
    upper = tstar + _TAIL_LIFETIMES / min(r for r in (early, late) if r > 0)
    return integrate(flow, 0.0, upper, tol=_OUTER_TOL, points=(tstar - p.capacity, tstar))


def efficient_threshold(p: MarketParams, tol: Tolerance = Tolerance()) -> ThresholdTime:
    """
    Welfare-maximising threshold t^O.

    never_operate if lambda K <= c; otherwise the root of t e^{-lambda (K - t)} = c / lambda.
    """
    _require_no_committed(p, "the efficient threshold")
    if p.throughput <= p.cost:
        return ThresholdTime.never_operate()
    target = p.cost / p.lam
    root = bisect(lambda t: efficient_payoff_flow(t, p) - target, 0.0, p.capacity, tol)
    return ThresholdTime.finite(root)


def optimal_block_reward(p: MarketParams, tol: Tolerance = Tolerance()) -> float:
    """
    Block reward y^O that makes the equilibrium threshold efficient.

    y^O = t^O e^{-lambda (K - t^O)} - M*(t^O) > 0.

    Raises:
        DomainError: If lambda K <= c (operating is never efficient)
    """
    _require_no_committed(p, "the optimal block reward")
    if p.throughput <= p.cost:
        raise DomainError(f"optimal reward needs lambda*K > c; got {p.throughput} <= {p.cost}")
    t_o = efficient_threshold(p, tol).value
    return float(efficient_payoff_flow(t_o, p)) - miner_surplus(t_o, p)


@dataclass
class WelfareReport:
    """Equilibrium versus efficient operation for one parameter set."""

    t_E: ThresholdTime
    t_O: Optional[ThresholdTime] = None
    y_O: Optional[float] = None
    sw_at_tE: Optional[float] = None
    sw_at_tO: Optional[float] = None
    user_welfare: Optional[float] = None
    miner_surplus_at_tE: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t_E": self.t_E.to_json(),
            "t_O": self.t_O.to_json() if self.t_O is not None else None,
            "y_O": self.y_O,
            "sw_at_tE": self.sw_at_tE,
            "sw_at_tO": self.sw_at_tO,
            "user_welfare": self.user_welfare,
            "miner_surplus_at_tE": self.miner_surplus_at_tE,
            "notes": list(self.notes),
        }


def welfare_report(p: MarketParams, tol: Tolerance = Tolerance()) -> WelfareReport:
    """Solve t^E and, for eta = 0, t^O, y^O and welfare at both."""
    t_e = equilibrium_threshold(p, tol)
    report = WelfareReport(t_E=t_e)
    if t_e.is_finite:
        report.miner_surplus_at_tE = miner_surplus(t_e.value, p)

    if p.eta != 0:
        report.notes.append("welfare quantities are defined for eta = 0 only")
        return report

    report.t_O = efficient_threshold(p, tol)
    report.sw_at_tE = welfare_at(t_e, p)
    report.sw_at_tO = welfare_at(report.t_O, p)
    report.user_welfare = user_welfare_at(t_e, p)
    if p.throughput > p.cost:
        report.y_O = optimal_block_reward(p, tol)
    else:
        report.notes.append("lambda*K <= c: operating is never efficient, no optimal reward")
    report.notes.append(STATIONARY_DENSITY_NOTE)
    return report


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    value: float
    t_E: Optional[ThresholdTime] = None
    t_O: Optional[ThresholdTime] = None
    y_O: Optional[float] = None
    sw: Optional[float] = None
    status: str = "OK"
    message: str = ""


@dataclass
class SweepTable:
    """Per-point solutions along one parameter axis."""

    parameter: str
    base: MarketParams
    rows: List[SweepRow]

    @property
    def grid(self) -> np.ndarray:
        return np.array([row.value for row in self.rows])

    def column(self, name: str) -> np.ndarray:
        """Numeric column with NaN for unsolved cells and infinite thresholds."""
        values = []
        for row in self.rows:
            item = getattr(row, name)
            if isinstance(item, ThresholdTime):
                item = item.value if item.is_finite else None
            values.append(np.nan if item is None else float(item))
        return np.array(values)

    def shape_summary(self, dead_band: float = 1e-6) -> Dict[str, Any]:
        """Reported, never asserted: monotonicity of t_E along the sweep."""
        t_e = self.column("t_E")
        finite = t_e[np.isfinite(t_e)]
        return {
            "t_E_sign_changes": count_sign_changes(finite, dead_band),
            "t_E_nonincreasing": bool(np.all(np.diff(finite) <= dead_band)),
            "t_E_nondecreasing": bool(np.all(np.diff(finite) >= -dead_band)),
        }


def count_sign_changes(values: Sequence[float], dead_band: float = 1e-6) -> int:
    """Sign changes of the first differences, ignoring steps within the dead-band."""
    steps = np.diff(np.asarray(values, dtype=float))
    signs = np.sign(steps[np.abs(steps) > dead_band])
    if signs.size < 2:
        return 0
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def _solve_row(args) -> SweepRow:
    base, parameter, value = args
    row = SweepRow(value=float(value))
    try:
        p = base.with_value(parameter, value)
        row.t_E = equilibrium_threshold(p)
    except FeeMarketError as e:
        row.status = "INVALID"
        row.message = e.detail
        logger.info("sweep row %s=%s invalid: %s", parameter, value, e.detail)
        return row

    # welfare columns fail independently; t_E is kept either way
    solvers = {
        "t_O": lambda: efficient_threshold(p),
        "y_O": lambda: optimal_block_reward(p) if p.throughput > p.cost else None,
        "sw": lambda: welfare_at(row.t_E, p),
    }
    failed = []
    for name, solve in solvers.items():
        try:
            setattr(row, name, solve())
        except FeeMarketError as e:
            failed.append(f"{name}: {e.detail}")
    if failed:
        row.status = "PARTIAL"
        row.message = "; ".join(failed)
        logger.info("sweep row %s=%s partial: %s", parameter, value, row.message)
    return row


def sweep(p: MarketParams, parameter: str, grid: Sequence[float], threads: int = 1) -> SweepTable:
    """
    Solve t^E, t^O, y^O and SW(t^E) at each grid value of one parameter.

    A row whose t^E cannot be solved is marked INVALID; one where only the
    welfare columns fail (eta > 0) keeps t^E and is marked PARTIAL. Neither
    aborts the sweep.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise InvalidParameterError(f"cannot sweep {parameter!r}; expected one of {SWEEP_PARAMETERS}")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise InvalidParameterError("sweep grid must be a nonempty 1-D sequence")
    if np.any(np.diff(grid) <= 0):
        raise InvalidParameterError("sweep grid must be strictly increasing")

    jobs = [(p, parameter, value) for value in grid]
    if threads > 1:
        with Pool(threads) as pool:
            rows = pool.map(_solve_row, jobs)
    else:
        rows = [_solve_row(job) for job in jobs]
    return SweepTable(parameter=parameter, base=p, rows=rows)
