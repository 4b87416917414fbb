"""Utility scoring: information gain (kappa), navigation relevance (tau) and their weighting."""

import math

import numpy as np
import pytest

from config_loader import ScenarioConfig
from navigation import PlannedPath
from perception import GaussianBelief, Observation
from utility import (
    UtilityParams, constant_velocity_track, forward_track, kappa, tau, tau_from_tracks, theta, time_grid, utility,
)


def _belief(mean, variance):
    return GaussianBelief(1, 0, np.asarray(mean, dtype=float), np.full(4, variance, dtype=float), 0.0)


def _obs(mean, sigma):
    return Observation(0, 0, 0.0, np.asarray(mean, dtype=float), np.full(4, sigma, dtype=float))


class TestKappa:
    def test_uninformative_observation_gains_nothing(self):
        belief = _belief([3.0, 4.0, 0.0, 0.0], 2.0)
        assert kappa(_obs([3.0, 4.0, 0.0, 0.0], 1e150), belief) == pytest.approx(0.0, abs=1e-12)

    def test_variance_reduction_closed_form(self):
        belief = _belief(np.zeros(4), 4.0)
        expected = 4 * 0.5 * (0.8 / 4.0 - 1.0 + math.log(4.0 / 0.8))
        assert kappa(_obs(np.zeros(4), 1.0), belief) == pytest.approx(expected)

    def test_monotone_in_mean_shift(self):
        belief = _belief(np.zeros(4), 0.01)
        near = kappa(_obs([0.1, 0.0, 0.0, 0.0], 0.1), belief)
        far = kappa(_obs([2.0, 0.0, 0.0, 0.0], 0.1), belief)
        assert far > near > 0.0

    def test_receiver_belief_untouched(self):
        belief = _belief([1.0, 1.0, 0.0, 0.0], 4.0)
        kappa(_obs(np.zeros(4), 0.5), belief)
        np.testing.assert_array_equal(belief.mean, [1.0, 1.0, 0.0, 0.0])
        np.testing.assert_array_equal(belief.variance, 4.0)


class TestTau:
    params = UtilityParams(p1=1.0, p2=1.0, horizon=5.0, d_min=0.5)

    def test_static_geometry(self):
        parked = PlannedPath(np.array([[0.0, 0.0], [10.0, 0.0]]), target_speed=0.0)
        sender_belief = _belief([2.0, 0.0, 0.0, 0.0], 1.0)
        assert tau(parked, 0.0, sender_belief, self.params, 0.05) == pytest.approx(0.25)

    def test_head_on_collision_is_clamped(self):
        path = PlannedPath(np.array([[0.0, 0.0], [10.0, 0.0]]), target_speed=1.0)
        sender_belief = _belief([10.0, 0.0, -1.0, 0.0], 1.0)
        assert tau(path, 0.0, sender_belief, self.params, 0.05) == pytest.approx(1.0 / 0.5 ** 2)

    def test_offset_crossing(self):
        path = PlannedPath(np.array([[0.0, 0.0], [10.0, 0.0]]), target_speed=1.0)
        sender_belief = _belief([10.0, 2.0, -1.0, 0.0], 1.0)
        assert tau(path, 0.0, sender_belief, self.params, 0.05) == pytest.approx(0.25)

    def test_receiver_waits_at_path_end(self):
        path = PlannedPath(np.array([[0.0, 0.0], [1.0, 0.0]]), target_speed=1.0)
        track = forward_track(path, 0.5, 1.0, horizon=2.0, dt=0.5)
        np.testing.assert_allclose(track[:, 0], [0.5, 1.0, 1.0, 1.0, 1.0])

    def test_tau_from_tracks(self):
        receiver = np.array([[0.0, 0.0], [1.0, 0.0]])
        subject = np.array([[0.0, 4.0], [1.0, 3.0]])
        assert tau_from_tracks(receiver, subject, d_min=0.5) == pytest.approx(1.0 / 9.0)


class TestUtility:
    @pytest.mark.parametrize("p1, p2, k, t, expected", [
        (1.0, 0.0, 0.7, 0.0, 0.7),
        (0.0, 1.0, 0.0, 0.25, 0.25),
        (1.0, 2.0, 0.5, 0.25, 1.0),
    ])
    def test_weighted_sum(self, p1, p2, k, t, expected):
        assert utility(k, t, UtilityParams(p1=p1, p2=p2)) == pytest.approx(expected)

    def test_theta_normalises_kappa(self):
        params = UtilityParams(p1=1.0, p2=2.0, kappa_scale=2.0)
        assert float(theta(0.7, 0.25, params)) == pytest.approx(0.85)
        np.testing.assert_allclose(theta(np.array([0.0, 2.0]), np.array([1.0, 0.0]), params), [2.0, 1.0])

    def test_theta_equals_utility_without_scale(self):
        params = UtilityParams(p1=1.0, p2=2.0)
        assert float(theta(0.5, 0.25, params)) == pytest.approx(utility(0.5, 0.25, params))

    @pytest.mark.parametrize("kwargs", [{"p1": -1.0}, {"p2": -0.1}, {"horizon": 0.0}, {"d_min": 0.0},
                                        {"kappa_scale": 0.0}])
    def test_rejects_bad_parameters(self, kwargs):
        with pytest.raises(ValueError):
            UtilityParams(**kwargs)

    def test_from_config(self):
        params = UtilityParams.from_config(ScenarioConfig(p1=2.0, p2=3.0, horizon=4.0, collision_radius=0.4,
                                                          kappa_scale=10.0))
        assert params == UtilityParams(p1=2.0, p2=3.0, horizon=4.0, d_min=0.4, kappa_scale=10.0)


class TestTracks:
    def test_time_grid_includes_horizon(self):
        grid = time_grid(5.0, 0.05)
        assert len(grid) == 101
        assert grid[0] == 0.0 and grid[-1] == 5.0

    def test_constant_velocity_track(self):
        track = constant_velocity_track(np.array([1.0, 2.0, 1.0, -1.0]), horizon=2.0, dt=1.0)
        np.testing.assert_allclose(track, [[1.0, 2.0], [2.0, 1.0], [3.0, 0.0]])
