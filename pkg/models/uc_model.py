"""
User-competition model: miners always operate and users are impatient.
Closed forms for the validation probability, equilibrium bid, welfare,
miner revenue and the stationary law of the pool time.
"""
from typing import Union

import numpy as np

from helpers.numerics import central_difference
from models.params import BidCurve, MarketParams, clamp_bid

ArrayLike = Union[float, np.ndarray]

# e^{-r t} underflows well before this
T_CAP = 1e6


def _scalar_or_array(values: np.ndarray, like: ArrayLike) -> ArrayLike:
    if np.ndim(like) == 0:
        return float(values)
    return values


def validation_probability_zero(p: MarketParams) -> float:
    """W(0) = 1 - e^{-lambda K}."""
    return float(-np.expm1(-p.throughput))


def bid_rate(p: MarketParams) -> float:
    """Hazard r = lambda e^{-lambda K} / (1 - e^{-lambda K}) of the equilibrium bid."""
    return float(p.lam * np.exp(-p.throughput) / -np.expm1(-p.throughput))


def uc_w(s: ArrayLike, p: MarketParams) -> ArrayLike:
    """
    Probability of validation for a user with s units of pending mass ahead.

    W(s) = 1 - exp(-lambda [K - s]^+).
    """
    s_arr = np.asarray(s, dtype=float)
    gap = np.maximum(p.capacity - s_arr, 0.0)
    return _scalar_or_array(-np.expm1(-p.lam * gap), s)


def uc_bid(t: ArrayLike, p: MarketParams) -> ArrayLike:
    """
    Equilibrium bid of the user arriving at pool time t.

    beta(t) = 1 - exp(-r t); pool times are capped at T_CAP and bids stay
    strictly below one even where the exponential underflows.
    """
    t_arr = np.minimum(np.asarray(t, dtype=float), T_CAP)
    return _scalar_or_array(clamp_bid(-np.expm1(-bid_rate(p) * t_arr)), t)


def uc_user_payoff(t: ArrayLike, p: MarketParams) -> ArrayLike:
    """U(t) = (1 - e^{-lambda K}) (1 - beta(t))."""
    payoff = validation_probability_zero(p) * (1.0 - np.asarray(uc_bid(t, p)))
    return _scalar_or_array(payoff, t)


def uc_user_welfare(p: MarketParams) -> float:
    """Stationary user welfare, (1 - e^{-lambda K})^2."""
    return validation_probability_zero(p) ** 2


def uc_miner_revenue_flow(t: ArrayLike, p: MarketParams) -> ArrayLike:
    """R(t) = (1 - e^{-lambda K}) beta(t), expected payment of the time-t user."""
    revenue = validation_probability_zero(p) * np.asarray(uc_bid(t, p))
    return _scalar_or_array(revenue, t)


def uc_miner_revenue(p: MarketParams) -> float:
    """Stationary miner revenue per unit time, e^{-lambda K}(1 - e^{-lambda K})."""
    return float(np.exp(-p.throughput)) * validation_probability_zero(p)


def uc_stationary_cdf(t: ArrayLike, p: MarketParams) -> ArrayLike:
    """Pool time is exponential with rate lambda in the long run."""
    t_arr = np.maximum(np.asarray(t, dtype=float), 0.0)
    return _scalar_or_array(-np.expm1(-p.lam * t_arr), t)


def uc_stationary_density(t: ArrayLike, p: MarketParams) -> ArrayLike:
    t_arr = np.asarray(t, dtype=float)
    density = np.where(t_arr >= 0, p.lam * np.exp(-p.lam * np.maximum(t_arr, 0.0)), 0.0)
    return _scalar_or_array(density, t)


def uc_first_order_residual(t: float, p: MarketParams, step: float = 1e-5) -> float:
    """
    W'(0)(1 - beta(t)) + W(0) beta'(t); zero at an equilibrium bid.

    beta' comes from a central difference so the check is independent of the
    closed form's derivative.
    """
    w_prime = -p.lam * float(np.exp(-p.throughput))
    beta_prime = central_difference(lambda x: uc_bid(x, p), t, step)
    return w_prime * (1.0 - uc_bid(t, p)) + validation_probability_zero(p) * beta_prime


def uc_bid_curve(grid: np.ndarray, p: MarketParams) -> BidCurve:
    """Sample the equilibrium bid for export."""
    grid = np.asarray(grid, dtype=float)
    return BidCurve(grid=grid, values=np.asarray(uc_bid(grid, p), dtype=float))
