#!/usr/bin/env python3
"""
Communication Utility Component for the iKnap Simulator

Scores a potential transfer of agent a's observation of subject h to agent b
as theta = p1 * kappa + p2 * tau, where kappa is the information the receiver
would gain (KL divergence of the hypothetical posterior from its current
belief) and tau is the inverse-squared closest approach between b and h over
the look-ahead horizon.
"""

import logging
from dataclasses import dataclass

import numpy as np

from perception import GaussianBelief, Observation, fuse_arrays, kl_arrays

# Set up logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('utility')


@dataclass(frozen=True)
class UtilityParams:
    p1: float = 1.0
    p2: float = 1.0
    horizon: float = 5.0
    d_min: float = 0.5
    kappa_scale: float = 1.0

    def __post_init__(self):
        if self.p1 < 0 or self.p2 < 0:
            raise ValueError("Utility weights p1 and p2 must be non-negative")
        if self.horizon <= 0 or self.d_min <= 0 or self.kappa_scale <= 0:
            raise ValueError("horizon, d_min and kappa_scale must be positive")

    @classmethod
    def from_config(cls, config) -> "UtilityParams":
        """Pull the utility knobs out of a ScenarioConfig"""
        return cls(p1=config.p1, p2=config.p2, horizon=config.horizon,
                   d_min=config.collision_radius, kappa_scale=config.kappa_scale)


def time_grid(horizon: float, dt: float) -> np.ndarray:
    """Sample times 0, dt, ..., horizon (the horizon itself always included)"""
    steps = max(int(round(horizon / dt)), 1)
    return np.linspace(0.0, horizon, steps + 1)


def forward_track(path, progress: float, speed: float, horizon: float, dt: float) -> np.ndarray:
    """Positions of an agent rolled along its planned path at constant speed, shape (T, 2)"""
    times = time_grid(horizon, dt)
    arclengths = np.minimum(progress + speed * times, path.total_length)
    return path.points_at(arclengths)


def constant_velocity_track(mean: np.ndarray, horizon: float, dt: float) -> np.ndarray:
    """Positions of a subject extrapolated from a belief mean [px, py, vx, vy], shape (T, 2)"""
    times = time_grid(horizon, dt)
    mean = np.asarray(mean, dtype=float)
    return mean[None, :2] + mean[None, 2:4] * times[:, None]


def kappa(sender_obs: Observation, receiver_belief: GaussianBelief) -> float:
    """
    Information the receiver would gain from the sender's observation

    Args:
        sender_obs (Observation): the candidate message
        receiver_belief (GaussianBelief): receiver's belief at the observation time

    Returns:
        float: KL(posterior || receiver_belief) in nats; the belief itself is untouched

    Raises:
        ValueError: if the observation concerns another subject
    """
    if sender_obs.subject != receiver_belief.subject:
        raise ValueError(f"Observation of subject {sender_obs.subject} cannot inform a belief about "
                         f"subject {receiver_belief.subject}")
    return float(kappa_arrays(sender_obs.mean, sender_obs.variance,
                              receiver_belief.mean[None, :], receiver_belief.variance[None, :])[0])


def kappa_arrays(obs_mean: np.ndarray, obs_variance: np.ndarray, prior_means: np.ndarray,
                 prior_variances: np.ndarray) -> np.ndarray:
    """kappa of one observation against a stack of receiver beliefs, shape (k,); never negative"""
    post_mean, post_var = fuse_arrays(prior_means, prior_variances, obs_mean[None, :], obs_variance[None, :])
    return np.maximum(kl_arrays(post_mean, post_var, prior_means, prior_variances), 0.0)


def tau_from_tracks(receiver_track: np.ndarray, subject_track: np.ndarray, d_min: float) -> float:
    min_distance = float(np.min(np.linalg.norm(receiver_track - subject_track, axis=-1)))
    return 1.0 / max(min_distance, d_min) ** 2


def tau(receiver_path, receiver_progress: float, sender_belief: GaussianBelief,
        params: UtilityParams, sim_dt: float) -> float:
    """
    Navigation relevance of a subject to a receiver

    The receiver is rolled along its planned path at the path's target speed
    (ignoring any future stops) and the subject at constant velocity from the
    sender's belief mean; both are sampled every sim_dt over [0, horizon].

    Args:
        receiver_path (PlannedPath): receiver's path
        receiver_progress (float): receiver's current arclength
        sender_belief (GaussianBelief): sender's belief of the subject
        params (UtilityParams): horizon and d_min
        sim_dt (float): sampling step (s)

    Returns:
        float: 1 / max(min distance, d_min)^2
    """
    receiver_track = forward_track(receiver_path, receiver_progress, receiver_path.target_speed,
                                   params.horizon, sim_dt)
    subject_track = constant_velocity_track(sender_belief.mean, params.horizon, sim_dt)
    return tau_from_tracks(receiver_track, subject_track, params.d_min)


def utility(kappa_val: float, tau_val: float, params: UtilityParams) -> float:
    """theta = p1 * kappa + p2 * tau"""
    return params.p1 * kappa_val + params.p2 * tau_val


def theta(kappa_val, tau_val, params: UtilityParams):
    """Utility with kappa first divided by its normaliser; works on scalars or arrays"""
    return utility(np.asarray(kappa_val) / params.kappa_scale, np.asarray(tau_val), params)


if __name__ == "__main__":
    from navigation import PlannedPath

    params = UtilityParams(p1=1.0, p2=2.0, horizon=5.0, d_min=0.5)
    print(f"utility(0.5, 0.25) = {utility(0.5, 0.25, params)}")

    path = PlannedPath(np.array([[0.0, 0.0], [10.0, 0.0]]), target_speed=1.0)
    belief = GaussianBelief(1, 0, np.array([10.0, 2.0, -1.0, 0.0]), np.ones(4), 0.0)
    print(f"tau for a head-on pass 2 m apart: {tau(path, 0.0, belief, params, 0.05):.3f}")
