#!/usr/bin/env python3
"""
Navigation Component for the iKnap Simulator

Agents follow shortest wall-wrapping polylines from a visibility-graph
planner, predict collisions with subjects from their own beliefs, and stop
one standard deviation short of the predicted collision point. Subjects
follow random natural cubic splines. Both track their references with PD
control.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.interpolate import CubicSpline
from scipy.stats import norm, qmc

from world_model import BodyState, Wall, point_segment_distance, segment_wall_distances, walls_to_array

# Set up logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('navigation')

# wall-end vertices sit this many clearances away from the endpoint
VERTEX_OFFSET = 1.25
CLEARANCE_TOLERANCE = 1e-9
ARC_SAMPLES_PER_SEGMENT = 200
# reference acceleration as a fraction of a_max
REFERENCE_ACCEL_FRACTION = 0.5


class PlanningError(ValueError):
    """Raised when no collision-free path exists"""


@dataclass
class PDGains:
    kp: float = 4.0
    kd: float = 4.0

    def __post_init__(self):
        if self.kp <= 0 or self.kd <= 0:
            raise ValueError("PD gains must be positive")


# ---------------------------------------------------------------------------
# Agent paths
# ---------------------------------------------------------------------------

@dataclass
class PlannedPath:
    """Polyline from start to goal traversed at target_speed"""
    waypoints: np.ndarray
    target_speed: float
    cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)
        steps = np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)
        if np.any(steps <= 0):
            raise ValueError("Consecutive waypoints must be distinct")
        self.cumulative = np.concatenate([[0.0], np.cumsum(steps)])

    @property
    def total_length(self) -> float:
        return float(self.cumulative[-1])

    def points_at(self, arclengths) -> np.ndarray:
        s = np.clip(np.asarray(arclengths, dtype=float), 0.0, self.total_length)
        return np.stack([
            np.interp(s, self.cumulative, self.waypoints[:, 0]),
            np.interp(s, self.cumulative, self.waypoints[:, 1]),
        ], axis=-1)

    def point_at(self, arclength: float) -> np.ndarray:
        return self.points_at(arclength)

    def tangent_at(self, arclength: float) -> np.ndarray:
        if len(self.waypoints) < 2:
            return np.zeros(2)
        index = int(np.searchsorted(self.cumulative, arclength, side="right")) - 1
        index = min(max(index, 0), len(self.waypoints) - 2)
        d = self.waypoints[index + 1] - self.waypoints[index]
        return d / np.linalg.norm(d)

    def project(self, point, hint: float = 0.0, backtrack: float = 1.0) -> float:
        """
        Arclength of the closest path point, ignoring segments that end
        more than `backtrack` metres behind `hint`
        """
        if len(self.waypoints) < 2:
            return 0.0
        a = self.waypoints[:-1]
        b = self.waypoints[1:]
        d = b - a
        length_sq = np.sum(d * d, axis=1)
        t = np.clip(np.sum((np.asarray(point) - a) * d, axis=1) / length_sq, 0.0, 1.0)
        closest = a + t[:, None] * d
        dist = np.linalg.norm(closest - point, axis=1)
        dist = np.where(self.cumulative[1:] >= hint - backtrack, dist, np.inf)
        index = int(np.argmin(dist))
        return float(self.cumulative[index] + t[index] * np.sqrt(length_sq[index]))


def _edge_clear(p, q, wall_array: np.ndarray, clearance: float) -> bool:
    if wall_array.shape[0] == 0:
        return True
    return float(np.min(segment_wall_distances(p, q, wall_array))) >= clearance * (1.0 - CLEARANCE_TOLERANCE)


def _wall_vertices(wall_array: np.ndarray, clearance: float) -> np.ndarray:
    offset = VERTEX_OFFSET * clearance
    vertices = []
    for ax, ay, bx, by in wall_array:
        a = np.array([ax, ay])
        b = np.array([bx, by])
        u = (b - a) / np.linalg.norm(b - a)
        n = np.array([-u[1], u[0]])
        for endpoint, outward in ((a, -u), (b, u)):
            tip = endpoint + offset * outward
            vertices.extend([tip, tip + offset * n, tip - offset * n])
    return np.array(vertices).reshape(-1, 2)


def plan_path(start, goal, walls: Sequence[Wall], clearance: float, target_speed: float = 1.5) -> PlannedPath:
    """
    Shortest clearance-respecting polyline from start to goal

    Builds a visibility graph over start, goal and points offset outward
    from every wall endpoint, keeps the edges that stay at least
    `clearance` away from every wall, and runs Dijkstra on it.

    Args:
        start, goal: 2D points outside every wall's clearance zone
        walls (list): static wall segments
        clearance (float): minimum distance kept from walls (m)
        target_speed (float): nominal speed along the path (m/s)

    Returns:
        PlannedPath: straight segment when unobstructed, otherwise a detour

    Raises:
        PlanningError: if start/goal sit inside a clearance zone or no path exists
    """
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    wall_array = walls_to_array(walls)

    if np.allclose(start, goal):
        return PlannedPath(start[None, :], target_speed)

    if wall_array.shape[0]:
        for name, point in (("start", start), ("goal", goal)):
            if np.min(point_segment_distance(point[None, :], wall_array[:, :2], wall_array[:, 2:])) < clearance:
                raise PlanningError(f"{name} {point.round(3)} lies inside a wall clearance zone")

    if _edge_clear(start, goal, wall_array, clearance):
        return PlannedPath(np.stack([start, goal]), target_speed)

    vertices = _wall_vertices(wall_array, clearance)
    wall_dist = np.min(point_segment_distance(vertices[:, None, :], wall_array[None, :, :2],
                                              wall_array[None, :, 2:]), axis=1)
    vertices = vertices[wall_dist >= clearance * (1.0 - CLEARANCE_TOLERANCE)]
    nodes = np.vstack([start, goal, vertices])

    graph = nx.Graph()
    graph.add_nodes_from(range(len(nodes)))
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            if _edge_clear(nodes[i], nodes[j], wall_array, clearance):
                graph.add_edge(i, j, weight=float(np.linalg.norm(nodes[i] - nodes[j])))

    try:
        route = nx.dijkstra_path(graph, 0, 1, weight="weight")
    except nx.NetworkXNoPath:
        raise PlanningError(f"No path from {start.round(3)} to {goal.round(3)} around {len(walls)} walls")

    return PlannedPath(nodes[route], target_speed)


# ---------------------------------------------------------------------------
# Subject trajectories
# ---------------------------------------------------------------------------

@dataclass
class SplineTrajectory:
    """Natural cubic spline through control points with an arc-length table"""
    control_points: np.ndarray
    target_speed: float
    spline: CubicSpline = field(init=False, repr=False)
    arc_table: np.ndarray = field(init=False, repr=False)
    param_table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        points = np.asarray(self.control_points, dtype=float).reshape(-1, 2)
        chords = np.linalg.norm(np.diff(points, axis=0), axis=1)
        if len(points) < 2 or np.any(chords <= 0):
            raise ValueError("A spline needs at least two distinct consecutive control points")
        self.control_points = points
        knots = np.concatenate([[0.0], np.cumsum(chords)])
        self.spline = CubicSpline(knots, points, bc_type="natural")

        u = np.linspace(0.0, knots[-1], ARC_SAMPLES_PER_SEGMENT * (len(points) - 1) + 1)
        samples = self.spline(u)
        self.param_table = u
        self.arc_table = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(samples, axis=0), axis=1))])

    @property
    def total_length(self) -> float:
        return float(self.arc_table[-1])

    def _param(self, arclength):
        return np.interp(arclength, self.arc_table, self.param_table)

    def point_at(self, arclength: float) -> np.ndarray:
        return self.spline(self._param(arclength))

    def tangent_at(self, arclength: float) -> np.ndarray:
        d = self.spline(self._param(arclength), 1)
        size = np.linalg.norm(d)
        return d / size if size > 0 else np.zeros(2)


def generate_subject_trajectory(start, goal, field_size: float, rng: np.random.Generator,
                                interior_points: Tuple[int, int] = (2, 4),
                                speed_range: Tuple[float, float] = (0.5, 2.0)) -> SplineTrajectory:
    """
    Random spline from start to goal through interior points inside the field

    Args:
        start, goal: distinct 2D points
        field_size (float): side of the square field (m)
        rng (Generator): scenario stream
        interior_points (tuple): inclusive range for the interior point count
        speed_range (tuple): uniform range for the target speed (m/s)

    Returns:
        SplineTrajectory
    """
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    if np.allclose(start, goal):
        raise ValueError("Subject start and goal must differ")

    count = int(rng.integers(interior_points[0], interior_points[1] + 1))
    points = [start]
    for _ in range(count):
        candidate = rng.uniform(0.0, field_size, size=2)
        while np.linalg.norm(candidate - points[-1]) < 1e-6:
            candidate = rng.uniform(0.0, field_size, size=2)
        points.append(candidate)
    if np.linalg.norm(goal - points[-1]) < 1e-6:
        points.pop()
    points.append(goal)

    speed = float(rng.uniform(speed_range[0], speed_range[1]))
    return SplineTrajectory(np.array(points), speed)


def advance_subject_reference(trajectory: SplineTrajectory, progress: float, direction: int,
                              dt: float) -> Tuple[float, int]:
    """Move the subject's reference along its spline, turning round at either end"""
    length = trajectory.total_length
    progress += direction * trajectory.target_speed * dt
    if progress >= length:
        progress, direction = max(2.0 * length - progress, 0.0), -1
    elif progress <= 0.0:
        progress, direction = min(-progress, length), 1
    return progress, direction


def subject_control(state: BodyState, trajectory: SplineTrajectory, reference_progress: float,
                    direction: int, gains: PDGains, a_max: float) -> np.ndarray:
    """PD tracking of the spline reference; subjects never avoid anything"""
    p_ref = trajectory.point_at(reference_progress)
    v_ref = direction * trajectory.target_speed * trajectory.tangent_at(reference_progress)
    return _clamp(gains.kp * (p_ref - state.position) + gains.kd * (v_ref - state.velocity), a_max)


# ---------------------------------------------------------------------------
# Collision prediction and agent control
# ---------------------------------------------------------------------------

@dataclass
class CollisionAssessment:
    imminent: bool = False
    stop_arclength: float = float("inf")
    mean_distance_to_collision: float = float("inf")
    distance_std: float = 0.0
    subject: Optional[int] = None
    probability: float = 0.0
    ignored_probability: float = 0.0


@dataclass
class ReferenceState:
    """Virtual leader an agent tracks along its path"""
    progress: float = 0.0
    speed: float = 0.0
    accel: float = 0.0


def sample_offsets(count: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Deterministic standard-normal offsets for collision sampling

    Scrambled Sobol points pushed through the normal quantile function give
    far steadier moments than the same number of plain random draws.
    """
    sampler = qmc.Sobol(d=2, scramble=True, seed=rng if rng is not None else 0)
    if count & (count - 1) == 0:
        uniform = sampler.random_base2(int(np.log2(count)))
    else:
        uniform = sampler.random(count)
    return norm.ppf(np.clip(uniform, 1e-12, 1.0 - 1e-12))


def _time_grid(horizon: float, dt: float) -> np.ndarray:
    steps = max(int(round(horizon / dt)), 1)
    return np.linspace(0.0, horizon, steps + 1)


def assess_collision(own_path: PlannedPath, own_progress: float, beliefs: Sequence, horizon: float,
                     collision_radius: float, sim_dt: float,
                     offsets: Optional[np.ndarray] = None,
                     sample_fraction: float = 0.0) -> CollisionAssessment:
    """
    Predict the earliest collision along the agent's own path

    The agent is rolled along its path at target speed and every subject is
    rolled at its believed constant velocity, starting from positions
    sampled from the positional belief. A subject counts as a collision
    threat as soon as any of its samples comes within `collision_radius`
    (or, with a positive `sample_fraction`, at least that share of them);
    the stop point is the mean collision arclength minus one standard
    deviation. A belief that is still the wide prior therefore stops the
    agent wherever one of its samples sits on the path ahead.

    Args:
        own_path (PlannedPath): the agent's path
        own_progress (float): the agent's current arclength along the path
        beliefs (list): GaussianBelief per subject, predicted to now
        horizon (float): look-ahead time (s)
        collision_radius (float): centre-to-centre contact distance (m)
        sim_dt (float): sampling step (s)
        offsets (np.ndarray, optional): (S, 2) standard-normal sample offsets
        sample_fraction (float): minimum share of colliding samples for a threat; 0 means any

    Returns:
        CollisionAssessment: the most restrictive threat, or a clear assessment
    """
    if offsets is None:
        offsets = sample_offsets(32)
    times = _time_grid(horizon, sim_dt)
    speed = own_path.target_speed
    arclengths = np.minimum(own_progress + speed * times, own_path.total_length)
    agent_track = own_path.points_at(arclengths)
    agent_reach = speed * horizon

    best = CollisionAssessment()
    ignored = 0.0
    for belief in beliefs:
        mean_p = belief.mean[:2]
        mean_v = belief.mean[2:]
        std_p = np.sqrt(belief.variance[:2])

        gap = float(np.linalg.norm(mean_p - agent_track[0]))
        reach = agent_reach + float(np.linalg.norm(mean_v)) * horizon + 3.0 * float(np.max(std_p)) + collision_radius
        if gap > reach:
            continue

        starts = mean_p + std_p * offsets
        tracks = starts[:, None, :] + mean_v[None, None, :] * times[None, :, None]
        separation = np.linalg.norm(tracks - agent_track[None, :, :], axis=2)
        inside = separation < collision_radius
        hit = inside.any(axis=1)
        probability = float(hit.mean())
        if not hit.any():
            continue
        if probability < sample_fraction:
            ignored = max(ignored, probability)
            continue

        first = np.argmax(inside[hit], axis=1)
        sep_hit = separation[hit]
        collision_s = np.empty(len(first))
        for row, j in enumerate(first):
            if j == 0:
                collision_s[row] = arclengths[0]
                continue
            before, after = sep_hit[row, j - 1], sep_hit[row, j]
            frac = (before - collision_radius) / (before - after)
            collision_s[row] = arclengths[j - 1] + frac * (arclengths[j] - arclengths[j - 1])

        distances = collision_s - own_progress
        mean_distance = float(np.mean(distances))
        distance_std = float(np.std(distances))
        stop = own_progress + max(mean_distance - distance_std, 0.0)
        if stop < best.stop_arclength:
            best = CollisionAssessment(
                imminent=True,
                stop_arclength=stop,
                mean_distance_to_collision=mean_distance,
                distance_std=distance_std,
                subject=belief.subject,
                probability=probability,
            )
    best.ignored_probability = ignored
    return best


def reference_speed_limit(path: PlannedPath, progress: float, assessment: CollisionAssessment,
                          ramp: float, buffer: float) -> float:
    """Target speed ramped linearly to zero over the last `ramp` metres before the stop point"""
    end = path.total_length
    if assessment.imminent:
        end = min(end, assessment.stop_arclength - buffer)
    remaining = end - progress
    if remaining <= 0.0:
        return 0.0
    return path.target_speed * min(1.0, remaining / ramp)


def advance_reference(path: PlannedPath, reference: ReferenceState, own_progress: float,
                      assessment: CollisionAssessment, dt: float, a_max: float,
                      ramp: float = 1.0, buffer: float = 0.05, max_lead: float = 1.0) -> ReferenceState:
    """
    Step the agent's virtual leader one tick

    The leader speeds up at most at half of a_max, slows down immediately,
    never runs more than `max_lead` ahead of the agent, and is held at the
    stop point (or at the agent itself) while a collision is imminent.
    """
    limit = reference_speed_limit(path, reference.progress, assessment, ramp, buffer)
    speed = min(limit, reference.speed + REFERENCE_ACCEL_FRACTION * a_max * dt)
    accel = float(np.clip((speed - reference.speed) / dt, -a_max, REFERENCE_ACCEL_FRACTION * a_max))
    progress = reference.progress + speed * dt
    progress = min(progress, own_progress + max_lead, path.total_length)
    if assessment.imminent:
        progress = min(progress, max(assessment.stop_arclength - buffer, own_progress))
    return ReferenceState(max(progress, 0.0), speed, accel)


def agent_control(state: BodyState, path: PlannedPath, reference: ReferenceState,
                  gains: PDGains, a_max: float) -> np.ndarray:
    """
    PD acceleration toward the reference point, clamped to a_max

    Returns:
        np.ndarray: acceleration a = a_ff + kp*(p_ref - p) + kd*(v_ref - v)
    """
    tangent = path.tangent_at(reference.progress)
    p_ref = path.point_at(reference.progress)
    v_ref = reference.speed * tangent
    accel = reference.accel * tangent + gains.kp * (p_ref - state.position) + gains.kd * (v_ref - state.velocity)
    return _clamp(accel, a_max)


def _clamp(vector: np.ndarray, limit: float) -> np.ndarray:
    size = float(np.hypot(vector[0], vector[1]))
    if size > limit:
        return vector * (limit / size)
    return vector


if __name__ == "__main__":
    walls = [Wall((5.0, -1.0), (5.0, 3.0))]
    path = plan_path([0.0, 0.0], [10.0, 0.0], walls, clearance=0.75)
    print(f"Waypoints:\n{path.waypoints.round(3)}\nLength: {path.total_length:.3f} m")

    rng = np.random.default_rng(7)
    trajectory = generate_subject_trajectory([2.0, 2.0], [30.0, 30.0], 40.0, rng)
    print(f"Spline length {trajectory.total_length:.2f} m at {trajectory.target_speed:.2f} m/s")
