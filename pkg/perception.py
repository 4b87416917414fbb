#!/usr/bin/env python3
"""
Perception and Belief Component for the iKnap Simulator

Agents see a subject when no wall cuts the sightline, receive a noisy
position/velocity sample whose standard deviation follows sigma = alpha / d^2,
and keep one diagonal Gaussian belief per subject, fused in information form
and predicted forward under a constant-velocity model.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from world_model import BodyState, open_segment_blocked, walls_to_array

# Set up logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('perception')

STATE_DIM = 4  # px, py, vx, vy


@dataclass(frozen=True)
class ObservationModel:
    alpha: float
    sigma_floor: float = 1e-3
    perceived_sigma_scale: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.sigma_floor <= 0 or self.perceived_sigma_scale <= 0:
            raise ValueError("ObservationModel needs alpha >= 0, sigma_floor > 0, perceived_sigma_scale > 0")

    def sigma(self, distance: float) -> float:
        """True per-axis noise std dev at the given observer-subject distance"""
        if distance <= 0.0:
            return self.sigma_floor
        return max(self.alpha / distance ** 2, self.sigma_floor)


@dataclass
class Observation:
    observer: int
    subject: int
    time: float
    mean: np.ndarray             # px, py, vx, vy
    perceived_sigma: np.ndarray  # per-axis std dev, same layout

    @property
    def variance(self) -> np.ndarray:
        return self.perceived_sigma ** 2


@dataclass
class GaussianBelief:
    owner: int
    subject: int
    mean: np.ndarray      # px, py, vx, vy
    variance: np.ndarray  # per-axis variance, same layout
    last_update: float

    @property
    def position_mean(self) -> np.ndarray:
        return self.mean[:2]

    @property
    def velocity_mean(self) -> np.ndarray:
        return self.mean[2:]

    def copy(self) -> "GaussianBelief":
        return GaussianBelief(self.owner, self.subject, self.mean.copy(), self.variance.copy(), self.last_update)


# ---------------------------------------------------------------------------
# Array kernels shared by the scalar API, the belief tables and the optimizer
# ---------------------------------------------------------------------------

def fuse_arrays(mean, variance, obs_mean, obs_variance):
    """Per-axis product of Gaussians; broadcasts over leading dimensions"""
    prior_precision = 1.0 / variance
    obs_precision = 1.0 / obs_variance
    post_variance = 1.0 / (prior_precision + obs_precision)
    post_mean = post_variance * (mean * prior_precision + obs_mean * obs_precision)
    return post_mean, post_variance


def predict_arrays(mean, variance, dt, q: float, q_v: float):
    """Constant-velocity prediction; dt may be an array broadcast over rows"""
    dt = np.asarray(dt, dtype=float)
    dt_col = dt[..., None] if dt.ndim else dt
    mean = np.array(mean, dtype=float, copy=True)
    variance = np.array(variance, dtype=float, copy=True)
    mean[..., 0:2] = mean[..., 0:2] + mean[..., 2:4] * dt_col
    variance[..., 0:2] = variance[..., 0:2] + variance[..., 2:4] * dt_col ** 2 + q * dt_col
    variance[..., 2:4] = variance[..., 2:4] + q_v * dt_col
    return mean, variance


def kl_arrays(post_mean, post_variance, prior_mean, prior_variance):
    """KL(post || prior) for diagonal Gaussians, summed over the last axis"""
    ratio = post_variance / prior_variance
    shift = (prior_mean - post_mean) ** 2 / prior_variance
    return 0.5 * np.sum(ratio + shift - 1.0 - np.log(ratio), axis=-1)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def is_visible(agent_pos, subject_pos, walls) -> bool:
    """
    True if no wall touches the open sightline between agent and subject

    Args:
        agent_pos, subject_pos: 2D positions
        walls: list of Wall, or a (w, 4) wall array

    Returns:
        bool
    """
    wall_array = walls if isinstance(walls, np.ndarray) else walls_to_array(walls)
    return not open_segment_blocked(np.asarray(agent_pos, dtype=float),
                                    np.asarray(subject_pos, dtype=float), wall_array)


def observe(model: ObservationModel, observer_state: BodyState, subject_state: BodyState,
            rng: np.random.Generator, observer: int = 0, subject: int = 0, time: float = 0.0) -> Observation:
    """
    Noisy sample of a subject's position and velocity

    Args:
        model (ObservationModel): noise law
        observer_state, subject_state (BodyState): ground truth
        rng (Generator): perception stream
        observer, subject (int): ids recorded on the observation
        time (float): observation time (s)

    Returns:
        Observation: truth plus N(0, sigma^2) noise per axis
    """
    distance = float(np.linalg.norm(subject_state.position - observer_state.position))
    sigma = model.sigma(distance)
    truth = np.concatenate([subject_state.position, subject_state.velocity])
    noisy = truth + rng.normal(0.0, sigma, size=STATE_DIM)
    perceived = np.full(STATE_DIM, sigma * model.perceived_sigma_scale)
    return Observation(observer, subject, time, noisy, perceived)


def fuse(belief: GaussianBelief, obs: Observation) -> GaussianBelief:
    """
    Bayesian update of a belief with one observation (precisions add per axis)

    Raises:
        ValueError: if the observation concerns another subject or predates the belief
    """
    if belief.subject != obs.subject:
        raise ValueError(f"Belief about subject {belief.subject} cannot fuse an observation of {obs.subject}")
    if obs.time < belief.last_update - 1e-9:
        raise ValueError(f"Observation at t={obs.time} predates belief at t={belief.last_update}")
    mean, variance = fuse_arrays(belief.mean, belief.variance, obs.mean, obs.variance)
    return GaussianBelief(belief.owner, belief.subject, mean, variance, max(belief.last_update, obs.time))


def predict_belief(belief: GaussianBelief, to_time: float, q: float, q_v: Optional[float] = None) -> GaussianBelief:
    """
    Push a belief forward to `to_time` assuming constant velocity

    Args:
        belief (GaussianBelief): belief at belief.last_update
        to_time (float): target time, not earlier than last_update
        q (float): position process noise (m^2/s)
        q_v (float, optional): velocity process noise; defaults to q

    Returns:
        GaussianBelief
    """
    dt = to_time - belief.last_update
    if dt < -1e-9:
        raise ValueError(f"Cannot predict a belief backwards ({belief.last_update} -> {to_time})")
    if dt <= 0.0:
        return belief.copy()
    q_v = q if q_v is None else q_v
    mean, variance = predict_arrays(belief.mean, belief.variance, dt, q, q_v)
    return GaussianBelief(belief.owner, belief.subject, mean, variance, to_time)


def propagate_observation(obs: Observation, to_time: float, q: float, q_v: float) -> Observation:
    """Carry an older observation forward to `to_time` with the prediction rule"""
    dt = to_time - obs.time
    if dt <= 0.0:
        return obs
    mean, variance = predict_arrays(obs.mean, obs.variance, dt, q, q_v)
    return Observation(obs.observer, obs.subject, to_time, mean, np.sqrt(variance))


def kl_divergence(post: GaussianBelief, prior: GaussianBelief) -> float:
    """Closed-form KL(post || prior) over the stacked 4D position+velocity state, in nats"""
    if post.subject != prior.subject:
        raise ValueError("KL divergence needs beliefs about the same subject")
    return max(float(kl_arrays(post.mean, post.variance, prior.mean, prior.variance)), 0.0)


def initial_belief(owner: int, subject: int, field_size: float, v_max: float) -> GaussianBelief:
    """Near-uninformative prior: field centre, standing still, field-wide spread"""
    mean = np.array([field_size / 2.0, field_size / 2.0, 0.0, 0.0])
    variance = np.array([field_size ** 2, field_size ** 2, v_max ** 2, v_max ** 2])
    return GaussianBelief(owner, subject, mean, variance, 0.0)


class BeliefTable:
    """All subject beliefs of one agent, stored as (m, 4) arrays"""

    def __init__(self, owner: int, means: np.ndarray, variances: np.ndarray, last_update: np.ndarray):
        self.owner = owner
        self.means = np.array(means, dtype=float).reshape(-1, STATE_DIM)
        self.variances = np.array(variances, dtype=float).reshape(-1, STATE_DIM)
        self.last_update = np.array(last_update, dtype=float).reshape(-1)

    @classmethod
    def initial(cls, owner: int, m_subjects: int, field_size: float, v_max: float) -> "BeliefTable":
        prior = initial_belief(owner, 0, field_size, v_max)
        return cls(owner,
                   np.tile(prior.mean, (m_subjects, 1)),
                   np.tile(prior.variance, (m_subjects, 1)),
                   np.zeros(m_subjects))

    def __len__(self) -> int:
        return self.means.shape[0]

    def get(self, subject: int) -> GaussianBelief:
        return GaussianBelief(self.owner, subject, self.means[subject].copy(),
                              self.variances[subject].copy(), float(self.last_update[subject]))

    def set(self, belief: GaussianBelief):
        if belief.owner != self.owner:
            raise ValueError(f"Belief of agent {belief.owner} stored in table of agent {self.owner}")
        self.means[belief.subject] = belief.mean
        self.variances[belief.subject] = belief.variance
        self.last_update[belief.subject] = belief.last_update

    def beliefs(self) -> List[GaussianBelief]:
        return [self.get(k) for k in range(len(self))]

    def predict_all(self, to_time: float, q: float, q_v: float):
        """Bring every belief forward to `to_time` in place"""
        dt = np.maximum(to_time - self.last_update, 0.0)
        self.means, self.variances = predict_arrays(self.means, self.variances, dt, q, q_v)
        self.last_update = np.maximum(self.last_update, to_time)

    def copy(self) -> "BeliefTable":
        return BeliefTable(self.owner, self.means, self.variances, self.last_update)


def observe_visible(model: ObservationModel, observer: int, observer_state: BodyState,
                    subject_states: Sequence[BodyState], wall_array: np.ndarray,
                    rng: np.random.Generator, time: float) -> List[Observation]:
    """Observe every subject currently visible to one agent, in subject order"""
    observations = []
    for k, subject_state in enumerate(subject_states):
        if is_visible(observer_state.position, subject_state.position, wall_array):
            observations.append(observe(model, observer_state, subject_state, rng,
                                        observer=observer, subject=k, time=time))
    return observations


if __name__ == "__main__":
    model = ObservationModel(alpha=0.01)
    rng = np.random.default_rng(0)
    agent = BodyState(np.array([0.0, 0.0]), np.zeros(2))
    subject = BodyState(np.array([0.5, 0.0]), np.array([1.0, 0.0]))

    belief = initial_belief(0, 0, field_size=40.0, v_max=2.5)
    obs = observe(model, agent, subject, rng)
    posterior = fuse(belief, obs)
    print(f"sigma at 0.5 m: {model.sigma(0.5):.4f}")
    print(f"posterior mean {posterior.mean.round(3)} var {posterior.variance}")
    print(f"information gain: {kl_divergence(posterior, belief):.2f} nats")
