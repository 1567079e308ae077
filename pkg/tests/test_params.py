import math

import numpy as np
import pytest

from helpers.errors import InvalidParameterError
from models.params import BidCurve, DeviationScan, MarketParams, ThresholdKind, ThresholdTime, pick_argmax


class TestMarketParams:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"lam": 0.0},
            {"lam": -1.0},
            {"lam": math.inf},
            {"lam": 1.0, "capacity": 0.0},
            {"lam": 1.0, "cost": -0.1},
            {"lam": 1.0, "reward": -0.1},
            {"lam": 1.0, "eta": 1.5},
            {"lam": 1.0, "rho": 0.0},
            {"lam": 1.0, "cost": math.nan},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidParameterError):
            MarketParams(**kwargs)

    def test_with_value(self, baseline):
        moved = baseline.with_value("lambda", 2.0)
        assert moved.lam == 2.0 and moved.cost == baseline.cost
        assert baseline.lam == 1.2

    def test_with_unknown_value(self, baseline):
        with pytest.raises(InvalidParameterError):
            baseline.with_value("gamma", 2.0)

    def test_to_dict_uses_flag_names(self, baseline):
        data = baseline.to_dict()
        assert data["lambda"] == 1.2
        assert "lam" not in data
        assert baseline.throughput == pytest.approx(1.2)


class TestThresholdTime:
    @pytest.mark.parametrize(
        "raw, kind, value",
        [
            ("0.5", ThresholdKind.FINITE, 0.5),
            (0.0, ThresholdKind.FINITE, 0.0),
            ("never_suspend", ThresholdKind.NEVER_SUSPEND, None),
            ("never-suspend", ThresholdKind.NEVER_SUSPEND, None),
            ("-inf", ThresholdKind.NEVER_SUSPEND, None),
            (-math.inf, ThresholdKind.NEVER_SUSPEND, None),
            ("inf", ThresholdKind.NEVER_OPERATE, None),
            ("NEVER_OPERATE", ThresholdKind.NEVER_OPERATE, None),
        ],
    )
    def test_parse(self, raw, kind, value):
        threshold = ThresholdTime.parse(raw)
        assert threshold.kind is kind
        assert threshold.value == value

    @pytest.mark.parametrize("raw", ["soon", "-0.5", math.nan])
    def test_parse_rejects(self, raw):
        with pytest.raises(InvalidParameterError):
            ThresholdTime.parse(raw)

    def test_json_never_uses_sentinels(self):
        assert ThresholdTime.never_suspend().to_json() == "never_suspend"
        assert ThresholdTime.never_operate().to_json() == "never_operate"
        assert ThresholdTime.finite(0.25).to_json() == 0.25

    def test_as_float_orders_kinds(self):
        values = [ThresholdTime.parse(raw).as_float() for raw in ("never_suspend", "0", "2", "never_operate")]
        assert values == sorted(values)


class TestBidCurve:
    def test_shape_checks(self):
        grid = np.linspace(0.0, 2.0, 5)
        assert all(BidCurve(grid, 1.0 - np.exp(-grid)).check_shape().values())
        shape = BidCurve(grid, np.array([0.1, 0.2, 0.2, 0.3, 1.0])).check_shape()
        assert shape == {"in_unit_interval": False, "strictly_increasing": False, "zero_at_origin": False}

    @pytest.mark.parametrize(
        "grid, values",
        [
            ([0.0, 1.0], [0.0]),
            ([1.0, 0.5], [0.1, 0.2]),
            ([-1.0, 0.5], [0.1, 0.2]),
        ],
    )
    def test_invalid(self, grid, values):
        with pytest.raises(InvalidParameterError):
            BidCurve(np.array(grid), np.array(values))


class TestArgmax:
    def test_near_tie_resolves_toward_zero(self):
        s = np.array([-0.2, -0.1, 0.0, 0.1])
        payoff = np.array([0.5, 0.7, 0.7 - 1e-12, 0.6])
        assert pick_argmax(s, payoff) == 0.0
        assert pick_argmax(s, payoff, tie_tol=0.0) == -0.1

    def test_scan_peak(self):
        s = np.linspace(-1.0, 1.0, 21)
        scan = DeviationScan(s=s, payoff=-(s - 0.1) ** 2, argmax_s=0.1, step=0.1)
        assert scan.peak_at_zero
        assert not DeviationScan(s=s, payoff=s, argmax_s=0.2, step=0.1).peak_at_zero
        assert scan.to_dict()["peak_at_zero"] is True
