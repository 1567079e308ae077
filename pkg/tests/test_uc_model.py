import numpy as np
import pytest

from helpers.errors import InvalidParameterError
from helpers.numerics import integrate
from models.params import BID_MAX, MarketParams
from models.uc_model import (
    bid_rate,
    uc_bid,
    uc_bid_curve,
    uc_first_order_residual,
    uc_miner_revenue,
    uc_miner_revenue_flow,
    uc_stationary_cdf,
    uc_stationary_density,
    uc_user_payoff,
    uc_user_welfare,
    uc_w,
    validation_probability_zero,
)

GRID = np.linspace(0.0, 5.0, 201)


@pytest.mark.parametrize("s, expected", [(0.0, 0.698806), (-1.0, 0.909282), (1.0, 0.0), (2.5, 0.0)])
def test_validation_probability(uc_params, s, expected):
    assert uc_w(s, uc_params) == pytest.approx(expected, abs=1e-6)


def test_validation_probability_matches_block_gaps(uc_params, rs):
    gaps = rs.generator.exponential(1 / uc_params.lam, 10**6)
    assert np.mean(gaps < uc_params.capacity) == pytest.approx(validation_probability_zero(uc_params), abs=3e-3)


def test_equilibrium_bid_value(uc_params):
    assert uc_bid(1.0, uc_params) == pytest.approx(0.40382, abs=1e-5)
    assert uc_bid(0.0, uc_params) == 0.0


def test_first_order_condition(uc_params):
    for t in (0.1, 0.5, 1.0, 2.0, 4.0):
        assert abs(uc_first_order_residual(t, uc_params)) < 1e-8


def test_bid_shape(uc_params):
    values = uc_bid(GRID, uc_params)
    assert uc_bid_curve(GRID, uc_params).check_shape() == {
        "in_unit_interval": True,
        "strictly_increasing": True,
        "zero_at_origin": True,
    }
    assert np.all(np.diff(values, 2) <= 1e-15)


def test_bid_decreasing_in_rate_and_capacity():
    base = uc_bid(GRID[1:], MarketParams(lam=1.2))
    assert np.all(uc_bid(GRID[1:], MarketParams(lam=2.0)) < base)
    assert np.all(uc_bid(GRID[1:], MarketParams(lam=1.2, capacity=2.0)) < base)


def test_huge_pool_time_is_capped(uc_params):
    assert uc_bid(1e12, uc_params) == pytest.approx(1.0)
    assert uc_bid(1e12, uc_params) < 1.0
    assert uc_bid(100.0, uc_params) < 1.0


def test_saturated_bids_keep_their_shape(uc_params):
    curve = uc_bid_curve(np.linspace(0.0, 200.0, 5), uc_params)
    assert np.all(curve.values < 1.0)
    assert curve.values[-1] == BID_MAX
    assert all(curve.check_shape().values())


@pytest.mark.parametrize("t, expected", [(0.0, 0.698806), (1.0, 0.41662)])
def test_user_payoff(uc_params, t, expected):
    assert uc_user_payoff(t, uc_params) == pytest.approx(expected, abs=1e-4 if t else 1e-6)


def test_miner_revenue_flow(uc_params):
    assert uc_miner_revenue_flow(1.0, uc_params) == pytest.approx(0.28219, abs=1e-4)
    total = uc_user_payoff(GRID, uc_params) + uc_miner_revenue_flow(GRID, uc_params)
    np.testing.assert_allclose(total, validation_probability_zero(uc_params), atol=1e-12)


def test_stationary_welfare_and_revenue(uc_params):
    assert uc_user_welfare(uc_params) == pytest.approx(0.488330, abs=1e-6)
    assert uc_miner_revenue(uc_params) == pytest.approx(0.210477, abs=1e-6)


def test_stationary_averages_match_flows(uc_params):
    density = lambda t: uc_stationary_density(t, uc_params)  # noqa: E731
    welfare = integrate(lambda t: uc_user_payoff(t, uc_params) * density(t), 0.0, 60.0)
    revenue = integrate(lambda t: uc_miner_revenue_flow(t, uc_params) * density(t), 0.0, 60.0)
    assert welfare == pytest.approx(uc_user_welfare(uc_params), abs=1e-8)
    assert revenue == pytest.approx(uc_miner_revenue(uc_params), abs=1e-8)


def test_stationary_law(uc_params):
    assert integrate(lambda t: uc_stationary_density(t, uc_params), 0.0, 60.0) == pytest.approx(1.0, abs=1e-10)
    assert uc_stationary_cdf(-1.0, uc_params) == 0.0
    assert uc_stationary_density(-1.0, uc_params) == 0.0
    assert uc_stationary_cdf(1.0, uc_params) == pytest.approx(1 - np.exp(-1.2), abs=1e-15)


def test_bid_rate_closed_form(uc_params):
    lam = uc_params.lam
    assert bid_rate(uc_params) == pytest.approx(lam / np.expm1(lam), rel=1e-12)


def test_global_best_response(uc_params):
    """Deviation payoff over s in [-t, K] peaks at the truthful report s = 0."""
    for t in np.linspace(0.0, 3.0, 13):
        s = np.linspace(-t, uc_params.capacity, 2001)
        payoff = uc_w(s, uc_params) * (1 - uc_bid(np.maximum(t - s, 0.0), uc_params))
        step = s[1] - s[0]
        assert abs(s[np.argmax(payoff)]) <= step * (1 + 1e-9)


def test_curve_rejects_negative_grid(uc_params):
    with pytest.raises(InvalidParameterError):
        uc_bid_curve(np.array([-1.0, 0.0]), uc_params)
