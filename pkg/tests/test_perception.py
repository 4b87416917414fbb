"""Perception: visibility, observation noise, Gaussian fusion, prediction and KL divergence."""

import math

import numpy as np
import pytest

from perception import (
    BeliefTable, GaussianBelief, Observation, ObservationModel, fuse, initial_belief, is_visible,
    kl_divergence, observe, observe_visible, predict_belief, propagate_observation,
)
from world_model import BodyState, Wall, walls_to_array


def _belief(mean, variance, subject=0, owner=0, last_update=0.0):
    return GaussianBelief(owner, subject, np.full(4, mean, dtype=float) if np.isscalar(mean) else np.asarray(mean, float),
                          np.full(4, variance, dtype=float) if np.isscalar(variance) else np.asarray(variance, float),
                          last_update)


def _obs(mean, variance, subject=0, observer=1, time=0.0):
    return Observation(observer, subject, time, np.full(4, mean, dtype=float),
                       np.full(4, math.sqrt(variance)))


class TestVisibility:
    def test_no_walls(self):
        assert is_visible([0.0, 0.0], [30.0, -7.0], [])

    def test_wall_bisects_sightline(self):
        assert not is_visible([0.0, 0.0], [2.0, 0.0], [Wall((1.0, -1.0), (1.0, 1.0))])

    def test_wall_beside_sightline(self):
        assert is_visible([0.0, 0.0], [2.0, 0.0], [Wall((1.0, 1.0), (1.0, 3.0))])

    def test_accepts_wall_array(self):
        walls = walls_to_array([Wall((1.0, -1.0), (1.0, 1.0))])
        assert not is_visible([0.0, 0.0], [2.0, 0.0], walls)

    def test_symmetric_on_random_scenes(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            walls = walls_to_array([Wall(tuple(rng.uniform(0.0, 20.0, 2)), tuple(rng.uniform(0.0, 20.0, 2)))
                                    for _ in range(int(rng.integers(0, 6)))])
            a, s = rng.uniform(0.0, 20.0, size=(2, 2))
            assert is_visible(a, s, walls) == is_visible(s, a, walls)

    @pytest.mark.parametrize("wall", [((1.0, 0.0), (1.0, 1.0)), ((0.5, 0.0), (1.5, 0.0)), ((2.0, -1.0), (2.0, 1.0))])
    def test_symmetric_on_touching_walls(self, wall):
        walls = [Wall(*wall)]
        assert is_visible([0.0, 0.0], [2.0, 0.0], walls) == is_visible([2.0, 0.0], [0.0, 0.0], walls)


class TestObservationModel:
    @pytest.mark.parametrize("distance, sigma", [(1.0, 0.01), (0.1, 1.0), (0.0, 1e-3), (100.0, 1e-3)])
    def test_sigma(self, distance, sigma):
        assert ObservationModel(alpha=0.01).sigma(distance) == pytest.approx(sigma)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            ObservationModel(alpha=-1.0)
        with pytest.raises(ValueError):
            ObservationModel(alpha=0.01, sigma_floor=0.0)

    def test_observation_noise_matches_sigma(self):
        model = ObservationModel(alpha=0.01)
        rng = np.random.default_rng(42)
        observer = BodyState(np.array([0.0, 0.0]), np.zeros(2))
        subject = BodyState(np.array([0.5, 0.0]), np.array([1.0, -1.0]))
        truth = np.array([0.5, 0.0, 1.0, -1.0])
        errors = np.array([observe(model, observer, subject, rng).mean - truth for _ in range(100_000)])
        assert np.std(errors) == pytest.approx(0.04, rel=0.02)

    def test_perceived_sigma_is_scaled(self):
        model = ObservationModel(alpha=0.01, perceived_sigma_scale=2.0)
        observer = BodyState(np.array([0.0, 0.0]), np.zeros(2))
        subject = BodyState(np.array([1.0, 0.0]), np.zeros(2))
        obs = observe(model, observer, subject, np.random.default_rng(0), observer=3, subject=1, time=2.5)
        np.testing.assert_allclose(obs.perceived_sigma, 0.02)
        assert (obs.observer, obs.subject, obs.time) == (3, 1, 2.5)

    def test_observe_visible_skips_occluded_subjects(self):
        model = ObservationModel(alpha=0.01)
        observer = BodyState(np.array([0.0, 0.0]), np.zeros(2))
        subjects = [BodyState(np.array([2.0, 0.0]), np.zeros(2)), BodyState(np.array([0.0, 2.0]), np.zeros(2))]
        walls = walls_to_array([Wall((1.0, -1.0), (1.0, 1.0))])
        seen = observe_visible(model, 0, observer, subjects, walls, np.random.default_rng(0), 1.0)
        assert [o.subject for o in seen] == [1]


class TestFuse:
    def test_equal_precision(self):
        posterior = fuse(_belief(0.0, 1.0), _obs(2.0, 1.0))
        np.testing.assert_allclose(posterior.mean, 1.0)
        np.testing.assert_allclose(posterior.variance, 0.5)

    def test_precision_weighted(self):
        posterior = fuse(_belief(0.0, 4.0), _obs(1.0, 1.0))
        np.testing.assert_allclose(posterior.mean, 0.8)
        np.testing.assert_allclose(posterior.variance, 0.8)

    def test_uninformative_observation(self):
        prior = _belief([1.0, 2.0, 0.5, -0.5], 3.0)
        posterior = fuse(prior, _obs(7.0, 1e300))
        np.testing.assert_allclose(posterior.mean, prior.mean, atol=1e-12)
        np.testing.assert_allclose(posterior.variance, prior.variance)

    def test_variance_never_grows(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            prior = _belief(rng.normal(size=4), rng.uniform(0.01, 10.0, size=4))
            posterior = fuse(prior, _obs(rng.normal(), rng.uniform(0.01, 10.0)))
            assert np.all(posterior.variance <= prior.variance)

    def test_simultaneous_observations_commute(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            prior = _belief(rng.normal(size=4), rng.uniform(0.01, 10.0, size=4))
            first = Observation(1, 0, 0.0, rng.normal(size=4), rng.uniform(0.1, 3.0, size=4))
            second = Observation(2, 0, 0.0, rng.normal(size=4), rng.uniform(0.1, 3.0, size=4))
            one_way = fuse(fuse(prior, first), second)
            other_way = fuse(fuse(prior, second), first)
            np.testing.assert_allclose(one_way.mean, other_way.mean, rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(one_way.variance, other_way.variance, rtol=1e-12)

    def test_other_subject_rejected(self):
        with pytest.raises(ValueError, match="subject"):
            fuse(_belief(0.0, 1.0, subject=0), _obs(0.0, 1.0, subject=1))

    def test_stale_observation_rejected(self):
        with pytest.raises(ValueError, match="predates"):
            fuse(_belief(0.0, 1.0, last_update=2.0), _obs(0.0, 1.0, time=1.0))

    def test_timestamp_advances(self):
        posterior = fuse(_belief(0.0, 1.0, last_update=1.0), _obs(0.0, 1.0, time=1.5))
        assert posterior.last_update == 1.5


class TestPredict:
    def test_zero_dt_is_identity(self):
        belief = _belief([1.0, 2.0, 3.0, 4.0], 0.5, last_update=1.0)
        predicted = predict_belief(belief, 1.0, q=0.1)
        np.testing.assert_array_equal(predicted.mean, belief.mean)
        np.testing.assert_array_equal(predicted.variance, belief.variance)

    def test_constant_velocity(self):
        predicted = predict_belief(_belief([0.0, 0.0, 1.0, 0.0], 0.1), 2.0, q=0.0)
        np.testing.assert_allclose(predicted.position_mean, [2.0, 0.0])
        np.testing.assert_allclose(predicted.velocity_mean, [1.0, 0.0])
        assert predicted.last_update == 2.0

    def test_variance_growth(self):
        belief = _belief(0.0, [1.0, 1.0, 0.25, 0.25])
        predicted = predict_belief(belief, 1.0, q=0.01)
        np.testing.assert_allclose(predicted.variance[:2] - belief.variance[:2], 0.26)
        np.testing.assert_allclose(predicted.variance[2:] - belief.variance[2:], 0.01)

    def test_separate_velocity_noise(self):
        predicted = predict_belief(_belief(0.0, 1.0), 2.0, q=0.0, q_v=0.5)
        np.testing.assert_allclose(predicted.variance[2:], 2.0)

    def test_position_variance_never_shrinks(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            belief = _belief(rng.normal(size=4), 10.0 ** rng.uniform(-6, 3, size=4), last_update=rng.uniform(0, 5))
            to_time = belief.last_update + rng.uniform(0.0, 10.0)
            predicted = predict_belief(belief, to_time, q=rng.uniform(0.0, 1.0), q_v=rng.uniform(0.0, 1.0))
            assert np.all(predicted.variance[:2] >= belief.variance[:2])
            assert np.all(predicted.variance[2:] >= belief.variance[2:])

    def test_backwards_rejected(self):
        with pytest.raises(ValueError, match="backwards"):
            predict_belief(_belief(0.0, 1.0, last_update=3.0), 2.0, q=0.0)

    def test_propagate_observation(self):
        obs = Observation(0, 0, 1.0, np.array([0.0, 0.0, 2.0, 0.0]), np.full(4, 0.1))
        moved = propagate_observation(obs, 1.5, q=0.0, q_v=0.0)
        np.testing.assert_allclose(moved.mean, [1.0, 0.0, 2.0, 0.0])
        assert moved.time == 1.5
        assert np.all(moved.perceived_sigma[:2] > obs.perceived_sigma[:2])
        assert propagate_observation(obs, 1.0, q=0.0, q_v=0.0) is obs


class TestKLDivergence:
    def test_self_divergence_is_zero(self):
        belief = _belief([1.0, -2.0, 0.3, 0.0], [0.5, 2.0, 1.0, 4.0])
        assert kl_divergence(belief, belief.copy()) == pytest.approx(0.0, abs=1e-12)

    def test_unit_mean_shift(self):
        post = _belief([1.0, 0.0, 0.0, 0.0], 1.0)
        prior = _belief(0.0, 1.0)
        assert kl_divergence(post, prior) == pytest.approx(0.5)

    def test_variance_ratio(self):
        post = _belief(0.0, 0.8)
        prior = _belief(0.0, 4.0)
        expected = 4 * 0.5 * (0.2 - 1.0 + math.log(5.0))
        assert kl_divergence(post, prior) == pytest.approx(expected)

    def test_nonnegative(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            post = _belief(rng.normal(size=4), rng.uniform(0.01, 5.0, size=4))
            prior = _belief(rng.normal(size=4), rng.uniform(0.01, 5.0, size=4))
            assert kl_divergence(post, prior) >= 0.0

    def test_different_subjects_rejected(self):
        with pytest.raises(ValueError):
            kl_divergence(_belief(0.0, 1.0, subject=0), _belief(0.0, 1.0, subject=1))


class TestBeliefTable:
    def test_initial_prior(self):
        table = BeliefTable.initial(owner=2, m_subjects=3, field_size=40.0, v_max=2.5)
        assert len(table) == 3
        belief = table.get(1)
        expected = initial_belief(2, 1, 40.0, 2.5)
        np.testing.assert_array_equal(belief.mean, expected.mean)
        np.testing.assert_array_equal(belief.variance, [1600.0, 1600.0, 6.25, 6.25])
        assert (belief.owner, belief.subject, belief.last_update) == (2, 1, 0.0)

    def test_set_and_get(self):
        table = BeliefTable.initial(0, 2, 10.0, 1.0)
        table.set(_belief([1.0, 2.0, 3.0, 4.0], 0.5, subject=1, last_update=0.5))
        np.testing.assert_array_equal(table.get(1).mean, [1.0, 2.0, 3.0, 4.0])
        assert table.get(1).last_update == 0.5

    def test_set_rejects_foreign_belief(self):
        table = BeliefTable.initial(0, 1, 10.0, 1.0)
        with pytest.raises(ValueError, match="table of agent 0"):
            table.set(_belief(0.0, 1.0, owner=1))

    def test_predict_all_matches_scalar_prediction(self):
        table = BeliefTable.initial(0, 2, 10.0, 1.0)
        table.set(_belief([1.0, 1.0, 1.0, -1.0], 0.2, subject=0, last_update=1.0))
        expected = [predict_belief(b, 3.0, q=0.05, q_v=0.02) for b in table.beliefs()]
        table.predict_all(3.0, 0.05, 0.02)
        for k, belief in enumerate(expected):
            np.testing.assert_allclose(table.get(k).mean, belief.mean)
            np.testing.assert_allclose(table.get(k).variance, belief.variance)
        np.testing.assert_array_equal(table.last_update, [3.0, 3.0])

    def test_copy_is_independent(self):
        table = BeliefTable.initial(0, 1, 10.0, 1.0)
        clone = table.copy()
        clone.means[0, 0] = -1.0
        assert table.means[0, 0] == 5.0
