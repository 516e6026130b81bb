import math
import os

import numpy as np
import pytest

from src.core.errors import InfeasibleGridError, InvalidParameterError, RaggedGridError
from src.core.error_laws import eps_fcfs, eps_grid, eps_lcfs
from src.core.field_model import CorrelationParams, Discipline, SystemConfig
from src.core.rate_optimizer import (INFEASIBLE, SearchOptions, lcfs_limit_error, lcfs_practical_lambda_t,
                                     optimize_fcfs, optimize_lcfs, sweep, to_frame, to_matrix)
from src.utils.config import Config

UNIT = CorrelationParams(1.0, 1.0)
SURFACE_CONFIG = os.path.join(os.path.dirname(__file__), os.pardir, "experiments", "fcfs_surface.json")


class TestFcfsOptimum:
    @pytest.fixture(scope="class")
    def result(self):
        return optimize_fcfs(UNIT, 4.0)

    def test_beats_reference_point(self, result):
        assert result.eps_star <= 0.68
        assert result.lambda_s_star * result.lambda_t_star < 4.0
        assert result.method == "grid_refine"
        assert result.evaluations > 64 * 64

    def test_value_is_consistent_with_closed_form(self, result):
        config = SystemConfig(result.lambda_s_star, result.lambda_t_star, 4.0)
        assert eps_fcfs(config, UNIT).eps_bar == pytest.approx(result.eps_star, abs=1e-12)

    def test_refinement_never_worsens(self, result):
        assert np.all(np.diff(result.history) <= 0)
        assert result.local_minima[0] == pytest.approx(
            (result.lambda_s_star, result.lambda_t_star, result.eps_star))

    def test_agrees_with_fine_grid(self, result):
        (s_low, s_high), (t_low, t_high) = SearchOptions().ranges(UNIT, 4.0)
        spatial = np.geomspace(s_low, s_high, 640)
        temporal = np.geomspace(t_low, t_high, 640)
        values = eps_grid(spatial[:, None], temporal[None, :], 4.0, UNIT)
        values = np.where(spatial[:, None] * temporal[None, :] < 0.999 * 4.0, values, np.nan)
        i, j = np.unravel_index(np.nanargmin(values), values.shape)
        cell = math.log(spatial[1] / spatial[0])

        assert result.eps_star <= values[i, j] + 1e-9
        assert abs(math.log(result.lambda_s_star / spatial[i])) <= 2 * cell
        assert abs(math.log(result.lambda_t_star / temporal[j])) <= 2 * cell

    def test_optimum_is_stationary(self, result):
        assert result.lambda_s_star * result.lambda_t_star < 0.99 * 4.0

        def eps_at(log_s, log_t):
            return eps_fcfs(SystemConfig(math.exp(log_s), math.exp(log_t), 4.0), UNIT).eps_bar

        log_s, log_t, h = math.log(result.lambda_s_star), math.log(result.lambda_t_star), 1e-3
        grad_s = (eps_at(log_s + h, log_t) - eps_at(log_s - h, log_t)) / (2 * h)
        grad_t = (eps_at(log_s, log_t + h) - eps_at(log_s, log_t - h)) / (2 * h)
        assert abs(grad_s) <= 1e-3
        assert abs(grad_t) <= 1e-3

    def test_slow_channel_leaves_nothing_to_gain(self):
        assert optimize_fcfs(UNIT, 1e-6).eps_star > 0.99

    def test_infeasible_grid(self):
        options = SearchOptions(lambda_s_range=(10.0, 100.0), lambda_t_range=(10.0, 100.0))
        with pytest.raises(InfeasibleGridError):
            optimize_fcfs(UNIT, 4.0, options)

    def test_search_options_are_checked(self):
        with pytest.raises(InvalidParameterError):
            SearchOptions(grid_points=2)
        with pytest.raises(InvalidParameterError):
            SearchOptions(margin=1.0)
        with pytest.raises(InvalidParameterError):
            SearchOptions(lambda_s_range=(5.0, 1.0)).ranges(UNIT, 4.0)


class TestLcfsOptimum:
    def test_unit_parameters(self):
        result = optimize_lcfs(UNIT, 2.0)
        assert result.lambda_s_star == pytest.approx(1.0)
        assert result.eps_star == pytest.approx(5 / 9, abs=1e-15)
        assert result.unbounded_lambda_t
        assert result.to_dict()["lambda_t_star"] == "inf"

    def test_spatial_and_service_rates_balance(self):
        params = CorrelationParams(0.1, 0.01)
        result = optimize_lcfs(params, 5e-5)
        assert result.lambda_s_star == pytest.approx(1.5811e-3, rel=1e-4)
        mu0 = 5e-5 / result.lambda_s_star
        assert 2 * result.lambda_s_star / params.b == pytest.approx(mu0 / params.a)

    def test_practical_update_rate(self):
        result = optimize_lcfs(UNIT, 2.0)
        assert result.practical_lambda_t == pytest.approx(79.0)
        config = SystemConfig(result.lambda_s_star, result.practical_lambda_t, 2.0, Discipline.LCFS)
        assert eps_lcfs(config, UNIT).eps_bar == pytest.approx(1.01 * result.eps_star, abs=1e-12)

    def test_practical_rate_is_none_when_any_rate_qualifies(self):
        assert lcfs_practical_lambda_t(UNIT, 2.0, 1.0, within=1.0) is None

    def test_matches_dense_grid(self):
        spatial = np.geomspace(1e-3, 1e3, 10000)
        values = lcfs_limit_error(spatial, 2.0, UNIT)
        best = spatial[np.argmin(values)]
        cell = math.log(spatial[1] / spatial[0])
        assert abs(math.log(best / optimize_lcfs(UNIT, 2.0).lambda_s_star)) <= cell

    def test_spatial_optimum_at_fast_updates(self):
        template = SystemConfig(1.0, 1e6, 2.0, Discipline.LCFS)
        spatial = list(np.geomspace(0.1, 10.0, 201))
        points = sweep(template, UNIT, lambda_s_values=spatial)
        best = min(points, key=lambda point: point.eps)
        assert abs(math.log(best.lambda_s)) <= math.log(spatial[1] / spatial[0])


class TestSweep:
    TEMPLATE = SystemConfig(1.0, 1.0, 4.0)

    def test_values_and_sentinels(self):
        points = sweep(self.TEMPLATE, UNIT, [1.0, 2.0], [1.0, 3.0])
        assert [(p.lambda_s, p.lambda_t) for p in points] == [(1.0, 1.0), (1.0, 3.0), (2.0, 1.0), (2.0, 3.0)]
        assert points[3].status == INFEASIBLE and points[3].eps is None
        assert points[1].eps == pytest.approx(eps_fcfs(SystemConfig(1.0, 3.0, 4.0), UNIT).eps_bar)
        assert points[0].method == "product_form"

    def test_missing_axis_uses_template(self):
        points = sweep(self.TEMPLATE, UNIT, lambda_t_values=[0.5, 1.0, 2.0])
        assert {p.lambda_s for p in points} == {1.0}
        assert len(points) == 3

    def test_frame_and_matrix(self):
        frame = to_frame(sweep(self.TEMPLATE, UNIT, [1.0, 2.0], [1.0, 3.0]))
        assert list(frame.columns) == ["lambda_s", "lambda_t", "eps", "status"]
        assert np.isnan(frame.loc[3, "eps"])
        matrix = to_matrix(frame)
        assert matrix.shape == (2, 2)
        assert np.isnan(matrix.loc[2.0, 3.0])

    def test_ragged_grid_is_rejected(self):
        frame = to_frame(sweep(self.TEMPLATE, UNIT, [1.0, 2.0], [1.0, 3.0]))
        with pytest.raises(RaggedGridError):
            to_matrix(frame.drop(index=2))

    @pytest.mark.parametrize("axis", [[1.0, 0.5, 2.0], [1.0, 1.0], [], [-1.0]])
    def test_bad_axes(self, axis):
        with pytest.raises(InvalidParameterError):
            sweep(self.TEMPLATE, UNIT, lambda_s_values=axis)


def test_bundled_surface_has_interior_minimum_near_optimum():
    experiment = Config(SURFACE_CONFIG).experiment()
    spatial, temporal = experiment.sweep_axes()
    assert len(spatial) == len(temporal) == 32
    matrix = to_matrix(to_frame(sweep(experiment.system_config(), experiment.correlation(), spatial, temporal)))
    values = matrix.to_numpy()
    i, j = np.unravel_index(np.nanargmin(values), values.shape)
    assert 0 < i < 31 and 0 < j < 31

    neighbours = values[i - 1:i + 2, j - 1:j + 2].copy()
    neighbours[1, 1] = np.nan
    assert values[i, j] < np.nanmin(neighbours)

    result = optimize_fcfs(experiment.correlation(), experiment.system_config().mu_bar)
    cell = math.log(spatial[1] / spatial[0])
    assert abs(math.log(result.lambda_s_star / matrix.index[i])) <= cell
    assert abs(math.log(result.lambda_t_star / matrix.columns[j])) <= cell
    assert result.eps_star <= values[i, j] + 1e-12
