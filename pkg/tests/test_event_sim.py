import numpy as np
import pytest

from helpers.errors import BadConfigError, DomainError, InvalidParameterError
from helpers.numerics import RandomSource
from helpers.observability import ExecutionTracker
from models.eo_model import expected_block_fee, mean_block_gap, stationary_density
from models.params import MarketParams, ThresholdTime
from models.uc_model import uc_miner_revenue, uc_user_welfare
from simulation.event_sim import (
    SimAccumulator,
    SimConfig,
    _draw_gaps,
    _run_accumulator,
    best_response_scan,
    run_ensemble,
    simulate_eo,
    simulate_uc,
    validated_cells,
)


def small_config(seed: int = 7, n_blocks: int = 5000, dt: float = 1e-3) -> SimConfig:
    return SimConfig(n_blocks=n_blocks, dt=dt, rs=RandomSource(seed))


class TestSimConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_blocks": 0, "dt": 1e-3},
            {"n_blocks": 100, "dt": 0.0},
            {"n_blocks": 100, "dt": float("nan")},
            {"n_blocks": 100, "dt": 1e-3, "burn_in": 100},
            {"n_blocks": 100, "dt": 1e-3, "burn_in": -1},
            {"n_blocks": 500, "dt": 1e-3, "hist_bins": 0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(BadConfigError):
            SimConfig(rs=RandomSource(0), **kwargs)

    def test_cell_mass_must_resolve_capacity(self, uc_params):
        with pytest.raises(BadConfigError) as info:
            simulate_uc(uc_params, small_config(dt=0.02))
        assert info.value.code == "BAD_CONFIG"

    def test_with_stream(self):
        cfg = small_config().with_stream(3)
        assert cfg.rs.stream_id == 3 and cfg.rs.seed == 7
        assert cfg.to_dict()["rs"] == {"seed": 7, "stream_id": 3, "path": []}


class TestGreedyValidation:
    @pytest.mark.parametrize("n_cells, capacity, expected", [(5, 3, (2, 5)), (2, 3, (0, 2)), (0, 3, (0, 0))])
    def test_scalar(self, n_cells, capacity, expected):
        assert validated_cells(n_cells, capacity) == expected

    def test_suffix_never_exceeds_capacity(self):
        n_cells = np.array([0, 1, 999, 1000, 1001, 5000])
        start, stop = validated_cells(n_cells, 1000)
        np.testing.assert_array_equal(stop, n_cells)
        assert np.all(stop - start <= 1000)
        assert np.all(stop - start == np.minimum(n_cells, 1000))

    def test_validated_mass_per_block(self, uc_params):
        stats = simulate_uc(uc_params, small_config())
        assert 0 < stats.validated_mass_per_block <= uc_params.capacity


class TestBlockGaps:
    def test_no_blocks_before_threshold(self, uc_params, rs):
        gaps = _draw_gaps(ThresholdTime.finite(0.5), uc_params, rs, 10000)
        assert gaps.min() >= 0.5

    def test_committed_miners_mix_rates(self, rs):
        p = MarketParams(lam=1.2, eta=0.5)
        gaps = _draw_gaps(ThresholdTime.finite(0.5), p, rs, 200000)
        assert gaps.min() < 0.5
        assert gaps.mean() == pytest.approx(mean_block_gap(0.5, p), rel=0.01)


class TestAccumulator:
    def test_merge_is_associative(self, uc_params):
        tstar = ThresholdTime.never_suspend()
        parts = [_run_accumulator(uc_params, tstar, small_config().with_stream(i)) for i in range(3)]
        left = parts[0].merge(parts[1]).merge(parts[2])
        right = parts[0].merge(parts[1].merge(parts[2]))
        assert left.n == right.n == sum(part.n for part in parts)
        for name in left.sums:
            assert left.sums[name] == pytest.approx(right.sums[name], rel=1e-12)
        np.testing.assert_allclose(left.time_below, right.time_below, rtol=1e-12)

    def test_merge_needs_same_grid(self):
        a = SimAccumulator(grid=np.linspace(0, 1, 5))
        b = SimAccumulator(grid=np.linspace(0, 2, 5))
        with pytest.raises(BadConfigError):
            a.merge(b)

    def test_time_weighted_cdf(self):
        acc = SimAccumulator(grid=np.array([0.0, 0.5, 1.0, 3.0]))
        gaps = np.array([1.0, 2.0])
        acc.add(gaps, {name: np.zeros(2) for name in acc.sums})
        np.testing.assert_allclose(acc.time_weighted_cdf(), [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])


class TestRuns:
    def test_same_seed_same_stats(self, uc_params):
        cfg = small_config()
        assert simulate_uc(uc_params, cfg).to_dict() == simulate_uc(uc_params, cfg).to_dict()

    def test_different_seeds_differ(self, uc_params):
        a = simulate_uc(uc_params, small_config(seed=1))
        b = simulate_uc(uc_params, small_config(seed=2))
        assert a.user_welfare_hat.value != b.user_welfare_hat.value

    def test_zero_threshold_reduces_to_user_competition(self, uc_params):
        cfg = small_config()
        uc = simulate_uc(uc_params, cfg)
        eo = simulate_eo(uc_params, ThresholdTime.finite(0.0), cfg)
        assert eo.n_blocks_recorded == uc.n_blocks_recorded
        for name in ("user_welfare_hat", "miner_revenue_hat", "social_welfare_hat", "mean_block_fee_hat"):
            assert getattr(eo, name).value == pytest.approx(getattr(uc, name).value, rel=1e-8)
        assert eo.ks_distance == pytest.approx(uc.ks_distance, abs=1e-9)

    def test_histogram_is_a_distribution(self, uc_params):
        stats = simulate_uc(uc_params, small_config())
        assert stats.hist_mass.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(stats.hist_mass >= -1e-12)
        assert len(stats.histogram_rows()) == 200

    def test_run_is_tracked(self, uc_params):
        simulate_uc(uc_params, small_config())
        events = ExecutionTracker.get_events()
        tracked = [event for event in events if event.name == "simulate_uc"]
        assert len(tracked) == 1 and tracked[0].status == "ok"

    def test_domain_is_checked(self, uc_params):
        with pytest.raises(DomainError):
            simulate_eo(uc_params, ThresholdTime.finite(1.0), small_config())

    def test_large_capacity_validates_everyone(self):
        p = MarketParams(lam=1.2, capacity=50.0)
        stats = simulate_uc(p, small_config(dt=0.01))
        assert stats.social_welfare_hat.value == pytest.approx(1.0, rel=0.02)
        assert stats.user_welfare_hat.value == pytest.approx(uc_user_welfare(p), rel=0.02)


class TestEnsemble:
    def test_independent_of_threads(self, uc_params):
        cfg = small_config(n_blocks=2000)
        serial = run_ensemble(uc_params, None, cfg, n_runs=3, threads=1, model="uc")
        parallel = run_ensemble(uc_params, None, cfg, n_runs=3, threads=2, model="uc")
        assert serial.to_dict() == parallel.to_dict()
        assert serial.n_blocks_recorded == 3 * (2000 - cfg.burn_in)
        assert serial.seed == {"seed": 7, "stream_ids": [0, 1, 2]}

    def test_bad_requests(self, uc_params):
        with pytest.raises(BadConfigError):
            run_ensemble(uc_params, None, small_config(), n_runs=0, model="uc")
        with pytest.raises(InvalidParameterError):
            run_ensemble(uc_params, None, small_config(), n_runs=1, model="patient")


class TestDiscretisation:
    def test_estimates_converge_as_cells_shrink(self, uc_params):
        # the same seed draws the same gaps at every dt
        reference = simulate_uc(uc_params, small_config(n_blocks=20000, dt=0.000625))
        errors = []
        for dt in (0.01, 0.005, 0.0025):
            stats = simulate_uc(uc_params, small_config(n_blocks=20000, dt=dt))
            errors.append(abs(stats.user_welfare_hat.value - reference.user_welfare_hat.value))
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] < 2e-3


@pytest.mark.slow
class TestAgreementWithClosedForms:
    def test_user_competition(self, uc_params):
        stats = simulate_uc(uc_params, SimConfig(n_blocks=100000, dt=1e-3, rs=RandomSource(7)))
        assert stats.user_welfare_hat.value == pytest.approx(uc_user_welfare(uc_params), rel=0.01)
        assert stats.miner_revenue_hat.value == pytest.approx(uc_miner_revenue(uc_params), rel=0.01)
        assert stats.ks_distance <= 0.01

    def test_endogenous_operation(self, uc_params):
        tstar = ThresholdTime.finite(0.5)
        stats = simulate_eo(uc_params, tstar, SimConfig(n_blocks=100000, dt=1e-3, rs=RandomSource(7)))
        assert stats.ks_distance <= 0.01
        assert stats.mean_block_fee_hat.value == pytest.approx(expected_block_fee(tstar, uc_params), rel=0.01)

        # flat before the threshold: every cycle outlasts it
        below = stats.hist_edges[1:] <= 0.5
        density = stats.hist_density[below]
        np.testing.assert_allclose(density, density[0], rtol=1e-9)
        assert density[0] == pytest.approx(stationary_density(0.25, tstar, uc_params), rel=0.01)


class TestBestResponse:
    @pytest.mark.parametrize("tstar", [0.0, 0.2, 0.4, 0.6, 0.8])
    def test_truthful_report_is_optimal(self, uc_params, tstar):
        for t in np.linspace(0.0, 3.0, 20):
            scan = best_response_scan(t, ThresholdTime.finite(tstar), uc_params, 2001)
            assert scan.peak_at_zero, f"t={t}, tstar={tstar}: argmax at s={scan.argmax_s}"

    @pytest.mark.parametrize("t", [0.3, 1.0, 2.0])
    @pytest.mark.parametrize("tstar", [0.25, 0.5, 0.75])
    def test_payoff_single_peaked(self, uc_params, t, tstar):
        scan = best_response_scan(t, ThresholdTime.finite(tstar), uc_params, 2001)
        left = scan.payoff[scan.s <= 0]
        right = scan.payoff[(scan.s >= 0) & (scan.s <= uc_params.capacity)]
        assert np.all(np.diff(left) >= -1e-9)
        assert np.all(np.diff(right) <= 1e-9)

    def test_user_competition(self, uc_params):
        scan = best_response_scan(1.0, ThresholdTime.never_suspend(), uc_params, 2001)
        assert scan.peak_at_zero
        assert scan.step == pytest.approx(2.0 / 2000)

    def test_bad_requests(self, uc_params):
        with pytest.raises(InvalidParameterError):
            best_response_scan(-0.1, ThresholdTime.never_suspend(), uc_params, 2001)
        with pytest.raises(InvalidParameterError):
            best_response_scan(1.0, ThresholdTime.never_suspend(), uc_params, 2)
