#!/usr/bin/env python3
"""
World Model for the iKnap Simulator

Holds the ground truth of one trial: agent and subject body states, walls,
and the simulation clock. Also provides the planar geometry used by
perception and planning, scenario generation from a ScenarioConfig, and the
double-integrator step that advances every body.
"""

import logging
import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config_loader import ScenarioConfig

# Set up logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('world_model')

STREAM_NAMES = ("scenario", "perception", "bandwidth", "sampling")


class InfeasibleScenarioError(ValueError):
    """Raised when bodies or walls cannot be placed within the retry budget"""


def vec2(x: float, y: float) -> np.ndarray:
    return np.array([x, y], dtype=float)


@dataclass
class BodyState:
    """Position (m) and velocity (m/s) of one body"""
    position: np.ndarray
    velocity: np.ndarray

    @property
    def speed(self) -> float:
        return float(np.hypot(self.velocity[0], self.velocity[1]))

    def copy(self) -> "BodyState":
        return BodyState(self.position.copy(), self.velocity.copy())


@dataclass(frozen=True)
class Wall:
    endpoint_a: Tuple[float, float]
    endpoint_b: Tuple[float, float]

    def __post_init__(self):
        if tuple(self.endpoint_a) == tuple(self.endpoint_b):
            raise ValueError(f"Degenerate wall at {self.endpoint_a}")

    @property
    def length(self) -> float:
        return float(np.hypot(self.endpoint_b[0] - self.endpoint_a[0],
                              self.endpoint_b[1] - self.endpoint_a[1]))


def walls_to_array(walls: Sequence[Wall]) -> np.ndarray:
    """Stack walls into a (w, 4) array of [ax, ay, bx, by] rows"""
    if not walls:
        return np.zeros((0, 4))
    return np.array([[*w.endpoint_a, *w.endpoint_b] for w in walls], dtype=float)


@dataclass
class AgentRecord:
    """Ground truth plus navigation bookkeeping for one agent"""
    state: BodyState
    start: np.ndarray
    goal: np.ndarray
    path: object  # navigation.PlannedPath
    v_max: float
    progress: float = 0.0
    reference: object = None  # navigation.ReferenceState
    finished: bool = False


@dataclass
class SubjectRecord:
    """Ground truth plus trajectory bookkeeping for one subject"""
    state: BodyState
    trajectory: object  # navigation.SplineTrajectory
    v_max: float
    reference_progress: float = 0.0
    direction: int = 1


@dataclass
class WorldState:
    tick: int
    sim_dt: float
    agents: List[AgentRecord]
    subjects: List[SubjectRecord]
    walls: List[Wall]
    field_size: float
    wall_array: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.wall_array is None:
            self.wall_array = walls_to_array(self.walls)

    @property
    def time(self) -> float:
        return self.tick * self.sim_dt

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def m_subjects(self) -> int:
        return len(self.subjects)


def trial_streams(seed: int) -> Dict[str, np.random.Generator]:
    """
    Independent random streams for one trial

    Scenario layout and bandwidth draws never share a stream with the
    scheme-dependent perception and sampling draws, so every scheme sees the
    same world for a given seed.
    """
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(child) for name, child in zip(STREAM_NAMES, children)}


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _sign(value: float) -> int:
    return (value > 0) - (value < 0)


def _on_segment(ax, ay, bx, by, cx, cy) -> bool:
    # c is collinear with a-b; check the bounding box
    return min(ax, bx) <= cx <= max(ax, bx) and min(ay, by) <= cy <= max(ay, by)


def segment_intersects(seg1_a, seg1_b, seg2_a, seg2_b) -> bool:
    """
    Closed-segment intersection test using orientation predicates

    Args:
        seg1_a, seg1_b: endpoints of the first segment
        seg2_a, seg2_b: endpoints of the second segment

    Returns:
        bool: True iff the segments share at least one point
    """
    p1x, p1y = float(seg1_a[0]), float(seg1_a[1])
    p2x, p2y = float(seg1_b[0]), float(seg1_b[1])
    q1x, q1y = float(seg2_a[0]), float(seg2_a[1])
    q2x, q2y = float(seg2_b[0]), float(seg2_b[1])

    o1 = _sign(_orient(p1x, p1y, p2x, p2y, q1x, q1y))
    o2 = _sign(_orient(p1x, p1y, p2x, p2y, q2x, q2y))
    o3 = _sign(_orient(q1x, q1y, q2x, q2y, p1x, p1y))
    o4 = _sign(_orient(q1x, q1y, q2x, q2y, p2x, p2y))

    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(p1x, p1y, p2x, p2y, q1x, q1y):
        return True
    if o2 == 0 and _on_segment(p1x, p1y, p2x, p2y, q2x, q2y):
        return True
    if o3 == 0 and _on_segment(q1x, q1y, q2x, q2y, p1x, p1y):
        return True
    if o4 == 0 and _on_segment(q1x, q1y, q2x, q2y, p2x, p2y):
        return True
    return False


def point_segment_distance(points: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray) -> np.ndarray:
    """
    Euclidean distance from points to segments, broadcasting over both

    Args:
        points: (..., 2) array
        seg_a, seg_b: (..., 2) segment endpoints

    Returns:
        np.ndarray: distances with the broadcast shape
    """
    points = np.asarray(points, dtype=float)
    seg_a = np.asarray(seg_a, dtype=float)
    seg_b = np.asarray(seg_b, dtype=float)
    d = seg_b - seg_a
    length_sq = np.sum(d * d, axis=-1)
    rel = points - seg_a
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(length_sq > 0, np.sum(rel * d, axis=-1) / np.where(length_sq > 0, length_sq, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = seg_a + t[..., None] * d
    return np.linalg.norm(points - closest, axis=-1)


def segment_wall_distances(p: np.ndarray, q: np.ndarray, wall_array: np.ndarray) -> np.ndarray:
    """Minimum distance between segment p-q and each wall row of wall_array"""
    if wall_array.shape[0] == 0:
        return np.zeros(0)
    a = wall_array[:, 0:2]
    b = wall_array[:, 2:4]
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)

    o1 = _orient(p[0], p[1], q[0], q[1], a[:, 0], a[:, 1])
    o2 = _orient(p[0], p[1], q[0], q[1], b[:, 0], b[:, 1])
    o3 = _orient(a[:, 0], a[:, 1], b[:, 0], b[:, 1], p[0], p[1])
    o4 = _orient(a[:, 0], a[:, 1], b[:, 0], b[:, 1], q[0], q[1])
    crossing = (o1 * o2 < 0) & (o3 * o4 < 0)

    dist = np.minimum.reduce([
        point_segment_distance(p[None, :], a, b),
        point_segment_distance(q[None, :], a, b),
        point_segment_distance(a, p[None, :], q[None, :]),
        point_segment_distance(b, p[None, :], q[None, :]),
    ])
    return np.where(crossing, 0.0, dist)


def open_segment_blocked(p: np.ndarray, q: np.ndarray, wall_array: np.ndarray) -> bool:
    """
    True if any wall touches the open segment p-q

    Contact exactly at p or q does not count, which keeps the test
    symmetric in its two endpoints.
    """
    if wall_array.shape[0] == 0:
        return False
    a = wall_array[:, 0:2]
    b = wall_array[:, 2:4]
    o1 = np.sign(_orient(p[0], p[1], q[0], q[1], a[:, 0], a[:, 1]))
    o2 = np.sign(_orient(p[0], p[1], q[0], q[1], b[:, 0], b[:, 1]))
    o3 = np.sign(_orient(a[:, 0], a[:, 1], b[:, 0], b[:, 1], p[0], p[1]))
    o4 = np.sign(_orient(a[:, 0], a[:, 1], b[:, 0], b[:, 1], q[0], q[1]))

    # wall crosses the segment, or a wall endpoint lies on its interior
    proper = (o1 != o2) & (o3 != o4) & (o3 != 0) & (o4 != 0)
    if np.any(proper):
        return True

    d = q - p
    length_sq = float(d @ d)
    if length_sq == 0.0:
        return False
    t_a = ((a - p) @ d) / length_sq
    t_b = ((b - p) @ d) / length_sq
    if np.any((o1 == 0) & (t_a > 0.0) & (t_a < 1.0)) or np.any((o2 == 0) & (t_b > 0.0) & (t_b < 1.0)):
        return True
    # collinear wall covering the whole segment
    collinear = (o1 == 0) & (o2 == 0)
    covering = np.maximum(np.minimum(t_a, t_b), 0.0) < np.minimum(np.maximum(t_a, t_b), 1.0)
    return bool(np.any(collinear & covering))


# ---------------------------------------------------------------------------
# Scenario generation
# ---------------------------------------------------------------------------

def _draw_point(rng, config: ScenarioConfig, avoid: List[np.ndarray], min_sep: float,
                what: str, anchor: Optional[np.ndarray] = None, min_anchor: float = 0.0) -> np.ndarray:
    margin = config.collision_radius
    low, high = margin, config.field_size - margin
    if high <= low:
        raise InfeasibleScenarioError(f"Field of size {config.field_size} m is too small for any {what}")

    for _ in range(config.placement_retries):
        point = rng.uniform(low, high, size=2)
        if any(np.linalg.norm(point - other) < min_sep for other in avoid):
            continue
        if anchor is not None and np.linalg.norm(point - anchor) < min_anchor:
            continue
        return point
    raise InfeasibleScenarioError(
        f"Infeasible scenario: could not place {what} after {config.placement_retries} attempts"
    )


def _draw_walls(rng, config: ScenarioConfig, protected: List[np.ndarray]) -> List[Wall]:
    keep_out = config.clearance + config.collision_radius
    protected_arr = np.array(protected).reshape(-1, 2)
    walls = []
    for index in range(config.n_walls):
        for _ in range(config.placement_retries):
            center = rng.uniform(0.0, config.field_size, size=2)
            angle = rng.uniform(0.0, np.pi)
            length = rng.uniform(config.wall_length_min, config.wall_length_max)
            half = 0.5 * length * np.array([np.cos(angle), np.sin(angle)])
            a, b = center - half, center + half
            if protected_arr.shape[0] and np.min(point_segment_distance(protected_arr, a, b)) < keep_out:
                continue
            walls.append(Wall(tuple(a), tuple(b)))
            break
        else:
            raise InfeasibleScenarioError(
                f"Infeasible scenario: could not place wall {index} after {config.placement_retries} attempts"
            )
    return walls


def generate_scenario(config: ScenarioConfig, rng: Optional[np.random.Generator] = None) -> WorldState:
    """
    Place agents, subjects, goals and walls for one trial

    Args:
        config (ScenarioConfig): validated configuration
        rng (Generator, optional): scenario stream; derived from config.seed if omitted

    Returns:
        WorldState: the world at tick 0 with planned agent paths and subject splines

    Raises:
        InfeasibleScenarioError: if placement fails within the retry budget
    """
    from navigation import PlanningError, ReferenceState, generate_subject_trajectory, plan_path

    config.validate()
    if rng is None:
        rng = trial_streams(config.seed)["scenario"]

    separation = 2.0 * config.collision_radius
    goal_reach = min(config.min_goal_distance, config.field_size / 2.0)

    starts: List[np.ndarray] = []
    agent_starts = []
    for i in range(config.n_agents):
        point = _draw_point(rng, config, starts, separation, f"agent {i} start")
        starts.append(point)
        agent_starts.append(point)
    subject_starts = []
    for k in range(config.m_subjects):
        point = _draw_point(rng, config, starts, separation, f"subject {k} start")
        starts.append(point)
        subject_starts.append(point)

    agent_goals: List[np.ndarray] = []
    for i in range(config.n_agents):
        agent_goals.append(_draw_point(rng, config, starts + agent_goals, separation,
                                       f"agent {i} goal", anchor=agent_starts[i], min_anchor=goal_reach))
    subject_goals = [
        _draw_point(rng, config, [], 0.0, f"subject {k} goal",
                    anchor=subject_starts[k], min_anchor=separation)
        for k in range(config.m_subjects)
    ]

    protected = agent_starts + agent_goals + subject_starts + subject_goals
    paths = None
    for attempt in range(config.placement_retries):
        walls = _draw_walls(rng, config, protected)
        try:
            paths = [
                plan_path(agent_starts[i], agent_goals[i], walls, config.clearance,
                          target_speed=config.agent_target_speed)
                for i in range(config.n_agents)
            ]
            break
        except PlanningError as e:
            logger.warning(f"Wall layout {attempt} blocks a path ({str(e)}); redrawing walls")
    if paths is None:
        raise InfeasibleScenarioError("Infeasible scenario: no wall layout leaves every goal reachable")

    agents = [
        AgentRecord(
            state=BodyState(agent_starts[i].copy(), np.zeros(2)),
            start=agent_starts[i],
            goal=agent_goals[i],
            path=paths[i],
            v_max=config.agent_v_max,
            reference=ReferenceState(),
        )
        for i in range(config.n_agents)
    ]
    subjects = []
    for k in range(config.m_subjects):
        trajectory = generate_subject_trajectory(
            subject_starts[k], subject_goals[k], config.field_size, rng,
            interior_points=(config.spline_points_min, config.spline_points_max),
            speed_range=(config.subject_speed_min, config.subject_speed_max),
        )
        subjects.append(SubjectRecord(
            state=BodyState(subject_starts[k].copy(), np.zeros(2)),
            trajectory=trajectory,
            v_max=config.subject_v_max,
        ))

    logger.debug(f"Generated scenario seed={config.seed}: {len(agents)} agents, "
                 f"{len(subjects)} subjects, {len(walls)} walls")
    return WorldState(tick=0, sim_dt=config.sim_dt, agents=agents, subjects=subjects,
                      walls=walls, field_size=config.field_size)


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------

def _integrate(state: BodyState, acceleration, dt: float, v_max: float) -> BodyState:
    velocity = state.velocity + np.asarray(acceleration, dtype=float) * dt
    speed = float(np.hypot(velocity[0], velocity[1]))
    if speed > v_max:
        velocity = velocity * (v_max / speed)
    position = state.position + velocity * dt
    return BodyState(position, velocity)


def advance_world(world: WorldState, agent_accels: Sequence, subject_accels: Sequence, dt: float) -> WorldState:
    """
    Semi-implicit Euler step of every body: v += a*dt, then p += v*dt

    Args:
        world (WorldState): current state (not modified)
        agent_accels: one acceleration per agent, already clamped by the controller
        subject_accels: one acceleration per subject
        dt (float): must equal world.sim_dt

    Returns:
        WorldState: the state one tick later
    """
    if abs(dt - world.sim_dt) > 1e-12:
        raise ValueError(f"advance_world expects dt == sim_dt ({world.sim_dt}), got {dt}")
    if len(agent_accels) != world.n_agents or len(subject_accels) != world.m_subjects:
        raise ValueError("One acceleration per body is required")

    agents = [
        dataclasses.replace(rec, state=_integrate(rec.state, acc, dt, rec.v_max))
        for rec, acc in zip(world.agents, agent_accels)
    ]
    subjects = [
        dataclasses.replace(rec, state=_integrate(rec.state, acc, dt, rec.v_max))
        for rec, acc in zip(world.subjects, subject_accels)
    ]
    return dataclasses.replace(world, tick=world.tick + 1, agents=agents, subjects=subjects)


if __name__ == "__main__":
    from config_loader import ScenarioConfig

    world = generate_scenario(ScenarioConfig(seed=42))
    print(f"t={world.time:.2f}s agents={world.n_agents} subjects={world.m_subjects} walls={len(world.walls)}")
    for i, agent in enumerate(world.agents):
        print(f"  agent {i}: start={agent.start.round(2)} goal={agent.goal.round(2)} "
              f"path length={agent.path.total_length:.2f} m")
