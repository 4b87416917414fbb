"""World model: geometry predicates, scenario generation and body integration."""

import numpy as np
import pytest

from config_loader import ScenarioConfig
from world_model import (
    AgentRecord, BodyState, InfeasibleScenarioError, Wall, WorldState, advance_world, generate_scenario,
    open_segment_blocked, point_segment_distance, segment_intersects, segment_wall_distances, trial_streams,
    walls_to_array,
)


def _one_agent_world(position, velocity, sim_dt=0.1, v_max=10.0):
    agent = AgentRecord(BodyState(np.array(position, dtype=float), np.array(velocity, dtype=float)),
                        start=np.zeros(2), goal=np.ones(2), path=None, v_max=v_max)
    return WorldState(tick=0, sim_dt=sim_dt, agents=[agent], subjects=[], walls=[], field_size=10.0)


class TestSegmentIntersects:
    @pytest.mark.parametrize("seg1, seg2, expected", [
        (((0, 0), (1, 0)), ((0.5, -1), (0.5, 1)), True),
        (((0, 0), (1, 0)), ((0, 1), (1, 1)), False),
        (((0, 0), (1, 0)), ((1, 0), (2, 0)), True),
        (((0, 0), (1, 0)), ((2, 0), (3, 0)), False),
        (((0, 0), (2, 2)), ((0, 2), (2, 0)), True),
        (((0, 0), (1, 0)), ((0.5, 0), (0.5, 1)), True),
    ])
    def test_examples(self, seg1, seg2, expected):
        assert segment_intersects(*seg1, *seg2) is expected

    def test_symmetric_and_endpoint_order_invariant(self):
        rng = np.random.default_rng(42)
        for _ in range(500):
            a, b, c, d = rng.integers(0, 4, size=(4, 2)).astype(float)
            if np.array_equal(a, b) or np.array_equal(c, d):
                continue
            value = segment_intersects(a, b, c, d)
            assert segment_intersects(c, d, a, b) is value
            assert segment_intersects(b, a, c, d) is value
            assert segment_intersects(a, b, d, c) is value

    def test_agrees_with_point_sampling(self):
        rng = np.random.default_rng(42)
        t = np.linspace(0.0, 1.0, 2001)
        for _ in range(200):
            a, b, c, d = rng.uniform(0, 4, size=(4, 2))
            distance = np.min(point_segment_distance(a + t[:, None] * (b - a), c, d))
            if distance > 1e-2:
                assert not segment_intersects(a, b, c, d)


class TestDistances:
    def test_point_segment_distance(self):
        distances = point_segment_distance(np.array([[0.5, 1.0], [2.0, 0.0], [-3.0, 4.0]]),
                                           np.array([0.0, 0.0]), np.array([1.0, 0.0]))
        np.testing.assert_allclose(distances, [1.0, 1.0, 5.0])

    def test_segment_wall_distances(self):
        walls = walls_to_array([Wall((0.0, 1.0), (1.0, 1.0)), Wall((0.5, -1.0), (0.5, 1.0))])
        distances = segment_wall_distances(np.array([0.0, 0.0]), np.array([1.0, 0.0]), walls)
        np.testing.assert_allclose(distances, [1.0, 0.0])

    def test_open_segment_ignores_endpoint_contact(self):
        walls = walls_to_array([Wall((2.0, -1.0), (2.0, 1.0))])
        assert not open_segment_blocked(np.array([0.0, 0.0]), np.array([2.0, 0.0]), walls)
        assert open_segment_blocked(np.array([0.0, 0.0]), np.array([3.0, 0.0]), walls)

    def test_collinear_covering_wall_blocks(self):
        walls = walls_to_array([Wall((-1.0, 0.0), (3.0, 0.0))])
        assert open_segment_blocked(np.array([0.0, 0.0]), np.array([2.0, 0.0]), walls)

    def test_degenerate_wall_rejected(self):
        with pytest.raises(ValueError):
            Wall((1.0, 1.0), (1.0, 1.0))


class TestAdvanceWorld:
    def test_constant_velocity(self):
        world = advance_world(_one_agent_world([0, 0], [1, 0]), [np.zeros(2)], [], 0.1)
        np.testing.assert_allclose(world.agents[0].state.position, [0.1, 0.0])
        np.testing.assert_allclose(world.agents[0].state.velocity, [1.0, 0.0])
        assert world.tick == 1
        assert world.time == pytest.approx(0.1)

    def test_semi_implicit_update(self):
        world = advance_world(_one_agent_world([0, 0], [0, 0]), [np.array([2.0, 0.0])], [], 0.1)
        np.testing.assert_allclose(world.agents[0].state.velocity, [0.2, 0.0])
        np.testing.assert_allclose(world.agents[0].state.position, [0.02, 0.0])

    def test_ten_steps_match_closed_form(self):
        world = _one_agent_world([0, 0], [1, 0])
        for _ in range(10):
            world = advance_world(world, [np.zeros(2)], [], 0.1)
        np.testing.assert_allclose(world.agents[0].state.position, [1.0, 0.0], atol=1e-12)

    def test_speed_is_clamped(self):
        world = advance_world(_one_agent_world([0, 0], [0, 0], v_max=1.0), [np.array([100.0, 0.0])], [], 0.1)
        assert world.agents[0].state.speed == pytest.approx(1.0)

    def test_input_world_unchanged(self):
        world = _one_agent_world([0, 0], [1, 0])
        advance_world(world, [np.array([1.0, 1.0])], [], 0.1)
        assert world.tick == 0
        np.testing.assert_array_equal(world.agents[0].state.position, [0.0, 0.0])

    def test_rejects_other_dt(self):
        with pytest.raises(ValueError, match="sim_dt"):
            advance_world(_one_agent_world([0, 0], [0, 0]), [np.zeros(2)], [], 0.05)

    def test_rejects_missing_accelerations(self):
        with pytest.raises(ValueError):
            advance_world(_one_agent_world([0, 0], [0, 0]), [], [], 0.1)


class TestGenerateScenario:
    def test_empty_world(self):
        world = generate_scenario(ScenarioConfig(n_agents=0, m_subjects=0, n_walls=0))
        assert world.n_agents == 0 and world.m_subjects == 0 and world.walls == []
        assert world.time == 0.0

    def test_same_seed_same_world(self):
        config = ScenarioConfig(seed=42)
        first, second = generate_scenario(config), generate_scenario(config)
        assert first.walls == second.walls
        for a, b in zip(first.agents, second.agents):
            np.testing.assert_array_equal(a.start, b.start)
            np.testing.assert_array_equal(a.goal, b.goal)
            np.testing.assert_array_equal(a.path.waypoints, b.path.waypoints)
        for a, b in zip(first.subjects, second.subjects):
            np.testing.assert_array_equal(a.trajectory.control_points, b.trajectory.control_points)
            assert a.trajectory.target_speed == b.trajectory.target_speed

    def test_different_seeds_differ(self):
        first = generate_scenario(ScenarioConfig(seed=1))
        second = generate_scenario(ScenarioConfig(seed=2))
        assert not np.array_equal(first.agents[0].start, second.agents[0].start)

    def test_default_counts_and_separation(self, default_config):
        world = generate_scenario(default_config)
        assert world.n_agents == 5 and world.m_subjects == 5 and len(world.walls) == 10
        starts = np.array([a.start for a in world.agents] + [s.state.position for s in world.subjects])
        gaps = np.linalg.norm(starts[:, None, :] - starts[None, :, :], axis=2)
        gaps[np.diag_indices(len(starts))] = np.inf
        assert gaps.min() >= 2 * default_config.collision_radius

    def test_walls_keep_clear_of_starts_and_goals(self, default_config):
        world = generate_scenario(default_config.with_updates(seed=7))
        keep_out = default_config.clearance + default_config.collision_radius
        points = np.array([a.start for a in world.agents] + [a.goal for a in world.agents])
        for row in world.wall_array:
            assert point_segment_distance(points, row[:2], row[2:]).min() >= keep_out - 1e-9

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_paths_respect_clearance(self, default_config, seed):
        config = default_config.with_updates(seed=seed)
        world = generate_scenario(config)
        for agent in world.agents:
            waypoints = agent.path.waypoints
            np.testing.assert_allclose(waypoints[0], agent.start)
            np.testing.assert_allclose(waypoints[-1], agent.goal)
            for p, q in zip(waypoints[:-1], waypoints[1:]):
                assert segment_wall_distances(p, q, world.wall_array).min() >= config.clearance * (1 - 1e-6)

    def test_overcrowded_field_is_infeasible(self):
        config = ScenarioConfig(n_agents=50, m_subjects=50, n_walls=0, field_size=5.0, placement_retries=10)
        with pytest.raises(InfeasibleScenarioError, match="Infeasible scenario"):
            generate_scenario(config)


class TestTrialStreams:
    def test_reproducible(self):
        a, b = trial_streams(5), trial_streams(5)
        for name in a:
            assert a[name].random() == b[name].random()

    def test_streams_are_independent(self):
        streams = trial_streams(5)
        draws = {name: rng.random() for name, rng in streams.items()}
        assert len(set(draws.values())) == len(draws)
