import math

import numpy as np
import pytest

from src.core.aoi_laws import fcfs_rr_lst, fcfs_ur_lst, lcfs_ur_lst
from src.core.errors import InvalidParameterError, SimulationError
from src.core.field_model import CorrelationParams, Discipline, Scheduler, SystemConfig
from src.core.field_simulator import (AoiTracker, ChannelMode, ChannelModel, default_warmup, equivalence_check,
                                      fcfs_deliveries, lcfs_deliveries, lindley_deliveries, simulate_aoi,
                                      simulate_field_error)

UNIT = CorrelationParams(1.0, 1.0)


class TestDeliveries:
    ARRIVALS = np.array([0.5, 0.6, 3.0])
    OPPORTUNITIES = np.array([1.0, 2.0, 2.5, 4.0])

    def test_fcfs_uses_one_opportunity_per_packet(self):
        delivered = fcfs_deliveries(self.ARRIVALS, self.OPPORTUNITIES)
        assert list(delivered) == [1.0, 2.0, 4.0]

    def test_fcfs_leaves_late_packets_queued(self):
        delivered = fcfs_deliveries(np.array([0.5, 0.6]), np.array([1.0]))
        assert delivered[0] == 1.0 and math.isinf(delivered[1])

    def test_keep_freshest_skips_stale_packets(self):
        delivered, generated = lcfs_deliveries(self.ARRIVALS, self.OPPORTUNITIES)
        assert list(delivered) == [1.0, 4.0]
        assert list(generated) == [0.6, 3.0]

    def test_lindley_recursion(self):
        assert list(lindley_deliveries(np.array([0.0, 1.0, 1.5]), np.array([2.0, 1.0, 1.0]))) == [2.0, 3.0, 4.0]
        assert list(lindley_deliveries(np.array([0.0, 5.0]), np.array([1.0, 1.0]))) == [1.0, 6.0]

    def test_empty_inputs(self):
        assert fcfs_deliveries(np.empty(0), self.OPPORTUNITIES).size == 0
        assert lcfs_deliveries(self.ARRIVALS, np.empty(0))[0].size == 0


class TestAoiTracker:
    TRACKER = AoiTracker(np.array([2.0, 5.0]), np.array([1.0, 4.0]))

    def test_sawtooth(self):
        assert list(self.TRACKER.age_at([1.0, 2.0, 4.9, 5.0])) == pytest.approx([1.0, 1.0, 3.9, 1.0])

    def test_exact_integrals(self):
        age_integral, lst = self.TRACKER.integrate(0.0, 6.0, [1.0])
        assert age_integral == pytest.approx(11.0)
        expected = (1 - math.exp(-2)) + math.exp(-1) * (1 - math.exp(-3)) + math.exp(-1) * (1 - math.exp(-1))
        assert lst[0] == pytest.approx(expected)

    def test_warmup_is_clipped(self):
        age_integral, _ = self.TRACKER.integrate(1.0, 6.0, [1.0])
        assert age_integral == pytest.approx(10.5)

    def test_deliveries_after_horizon_are_dropped(self):
        tracker = AoiTracker.from_deliveries(np.array([1.0, 3.0, np.inf]), np.array([0.5, 2.0, 2.5]), 2.0)
        assert tracker.deliveries == 1

    def test_age_drops_only_at_deliveries(self):
        run_arrivals = np.sort(np.random.default_rng(1).uniform(0, 100, 80))
        opportunities = np.sort(np.random.default_rng(2).uniform(0, 100, 120))
        tracker = AoiTracker.from_deliveries(fcfs_deliveries(run_arrivals, opportunities), run_arrivals, 100.0)
        before = tracker.age_at(tracker.delivery_times - 1e-9)
        after = tracker.age_at(tracker.delivery_times)
        assert np.all(after <= before)
        assert np.all(after >= 0)


class TestChannelModel:
    def test_parse_and_validation(self):
        assert ChannelMode.parse("channel-level") is ChannelMode.CHANNEL_LEVEL
        with pytest.raises(InvalidParameterError):
            ChannelMode.parse("shared")
        with pytest.raises(InvalidParameterError):
            ChannelModel("decoupled", "ur", 4.0, 0)

    def test_round_robin_turns_are_erlang_spaced(self):
        channel = ChannelModel("decoupled", "rr", 4.0, 4)
        for times in channel.opportunities(seed=1, replication=0, horizon=1e4):
            assert np.mean(np.diff(times)) == pytest.approx(1.0, rel=0.03)

    def test_channel_level_round_robin_is_cyclic(self):
        channel = ChannelModel("channel", "rr", 4.0, 3)
        counts = [times.size for times in channel.opportunities(seed=1, replication=0, horizon=100.0)]
        assert max(counts) - min(counts) <= 1


class TestSimulateAoi:
    def test_fcfs_mean_age(self):
        run = simulate_aoi("fcfs", "ur", 0.5, 1.0, 1, horizon=1e6, warmup=100.0, seed=1)
        assert run.point(0).mean_age == pytest.approx(3.5, rel=0.02)
        assert run.point(0).mean_in_system == pytest.approx(1.0, rel=0.05)

    def test_keep_freshest_mean_age(self):
        run = simulate_aoi("lcfs", "ur", 1.0, 1.0, 1, horizon=1e6, warmup=100.0, seed=2, mode="decoupled")
        assert run.point(0).mean_age == pytest.approx(2.0, rel=0.02)
        assert math.isnan(run.point(0).mean_in_system)
        assert run.point(0).lst[1.0] == pytest.approx(lcfs_ur_lst(1.0, 1.0, 1.0), abs=0.01)

    def test_shared_channel_matches_per_point_law(self):
        run = simulate_aoi("fcfs", "ur", 0.1, 4.0, 4, horizon=2e5, warmup=200.0, seed=3)
        for s, value in run.average_lst().items():
            assert value == pytest.approx(fcfs_ur_lst(0.1, 1.0, s), abs=0.01)

    def test_round_robin_matches_erlang_service_law(self):
        run = simulate_aoi("fcfs", "rr", 0.1, 4.0, 4, horizon=2e5, warmup=200.0, seed=4, mode="decoupled")
        for s, value in run.average_lst().items():
            assert value == pytest.approx(fcfs_rr_lst(0.1, 4.0, 4, s), abs=0.01)

    def test_same_seed_same_path(self):
        first = simulate_aoi("fcfs", "ur", 0.2, 2.0, 3, horizon=1e3, warmup=10.0, seed=5)
        second = simulate_aoi("fcfs", "ur", 0.2, 2.0, 3, horizon=1e3, warmup=10.0, seed=5)
        assert np.array_equal(first.mean_age, second.mean_age)
        assert np.array_equal(first.lst, second.lst)

    def test_no_delivery_is_an_error(self):
        with pytest.raises(SimulationError):
            simulate_aoi("fcfs", "ur", 0.1, 1.0, 1, horizon=1e-6, warmup=0.0, seed=1)

    @pytest.mark.parametrize("horizon, warmup", [(10.0, 10.0), (10.0, -1.0), (0.0, 0.0)])
    def test_bad_window(self, horizon, warmup):
        with pytest.raises(InvalidParameterError):
            simulate_aoi("fcfs", "ur", 0.1, 1.0, 1, horizon=horizon, warmup=warmup, seed=1)


class TestEquivalence:
    def test_single_point_modes_share_every_draw(self):
        report = equivalence_check("ur", 0.5, 1.0, 1, seeds=[1, 2, 3], horizon=5e3)
        assert report.passed
        assert all(row.difference == 0.0 for row in report.rows)

    def test_shared_channel_and_decoupled_agree(self):
        report = equivalence_check("ur", 0.1, 4.0, 4, seeds=[1, 2, 3, 4, 5], horizon=2e4)
        assert report.passed
        assert [row.metric for row in report.rows] == ["aoi_mean", "lst(0.5)", "lst(1)", "lst(2)"]

    def test_needs_two_seeds(self):
        with pytest.raises(InvalidParameterError):
            equivalence_check(Scheduler.UNIFORM_RANDOM, 0.5, 1.0, 1, seeds=[1])


class TestFieldError:
    CONFIG = SystemConfig(1.0, 1.0, 4.0)

    def small_run(self, **overrides):
        options = dict(region_length=20.0, probes=50, horizon=200.0, replications=3, seed=9)
        options.update(overrides)
        return simulate_field_error(self.CONFIG, UNIT, **options)

    def test_reproducible(self):
        first, second = self.small_run(), self.small_run()
        assert first.replication_means == second.replication_means
        assert first.manifest["seed"] == 9
        assert "Philox" in first.manifest["algorithm"]
        assert len(first.manifest["point_counts"]) == 3

    def test_interval_coverage(self):
        result = self.small_run()
        assert result.covers(result.eps_hat)
        assert result.covers(result.eps_hat - 0.5 * result.ci95)
        assert not result.covers(result.eps_hat + 2.0 * result.ci95 + 1e-9)

    def test_fresh_seed_is_recorded(self):
        result = self.small_run(seed=None, replications=2)
        assert isinstance(result.seed, int)
        assert result.manifest["seed"] == result.seed

    def test_zero_horizon_leaves_only_spatial_error(self):
        result = self.small_run(horizon=1e-6, warmup=0.0)
        assert result.eps_hat == pytest.approx(result.spatial_only_error, abs=1e-5)
        assert any("no delivery" in note for note in result.warnings)

    def test_sparse_field_warns(self):
        result = self.small_run(region_length=5.0)
        assert any("few sampling points" in note for note in result.warnings)

    def test_interior_probes(self):
        result = self.small_run(edge_mode="interior", region_length=40.0)
        assert 0.0 < result.eps_hat < 1.0
        assert result.manifest["edge_mode"] == "interior"

    def test_default_warmup(self):
        assert default_warmup(SystemConfig(1.0, 2.0, 4.0)) == pytest.approx(5.0)
        assert default_warmup(SystemConfig(1.0, 1.0, 1.0, Discipline.LCFS)) == pytest.approx(20.0)

    def test_bad_arguments(self):
        with pytest.raises(InvalidParameterError):
            self.small_run(probes=0)
        with pytest.raises(InvalidParameterError):
            self.small_run(replications=0)


@pytest.mark.slow
def test_fcfs_field_error_matches_closed_form():
    result = simulate_field_error(SystemConfig(1.0, 2.0, 4.0), UNIT, region_length=200.0,
                                  replications=20, seed=20240601, workers=4)
    assert result.ci95 <= 0.01
    assert result.covers(17 / 25)


@pytest.mark.slow
def test_keep_freshest_field_error_matches_closed_form():
    result = simulate_field_error(SystemConfig(1.5, 1.0, 2.0, Discipline.LCFS), UNIT, region_length=200.0,
                                  replications=20, seed=20240602, workers=4)
    assert result.ci95 <= 0.01
    assert result.covers(11 / 14)
