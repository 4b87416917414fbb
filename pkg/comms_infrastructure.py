#!/usr/bin/env python3
"""
Communication Infrastructure Component for the iKnap Simulator

The centralized broker: each epoch it takes the observations the agents
uploaded since the previous epoch, builds the candidate transfers, lets the
trial's scheme pick which ones fit the bandwidth budget and fuses the picked
observations into the receivers' beliefs.
"""

import math
import time
import logging
from enum import Enum
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from knapsack_optimizer import CandidateComm, enumerate_candidates, latest_uploads, solve_knapsack
from perception import BeliefTable, Observation, fuse_arrays, propagate_observation
from utility import UtilityParams

# Set up logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('comms_infrastructure')


class SchemeKind(Enum):
    IKNAP = "iknap"
    BROADCAST_BASELINE = "broadcast"
    NO_COMM = "no_comm"

    @classmethod
    def parse(cls, name: str) -> "SchemeKind":
        """Accept either the enum name or its value, case-insensitively"""
        text = name.strip()
        for scheme in cls:
            if text.upper() == scheme.name or text.lower() == scheme.value:
                return scheme
        raise ValueError(f"Unknown scheme '{name}'. Choose from: {', '.join(s.name for s in cls)}")


@dataclass(frozen=True)
class Delivery:
    sender: int
    receiver: int
    subject: int
    bandwidth: int
    utility: float


@dataclass
class EpochLog:
    time: float
    scheme: str
    candidate_count: int = 0
    chosen_count: int = 0
    deliveries: int = 0
    bandwidth_used: int = 0
    bandwidth_limit: int = 0
    optimizer_time: float = 0.0
    delivered_utility: float = 0.0


def sample_pairwise_bandwidth(n_agents: int, low: int, high: int, rng: np.random.Generator) -> np.ndarray:
    """
    Symmetric integer cost matrix with entries uniform in [low, high]

    Args:
        n_agents (int): number of agents
        low, high (int): inclusive cost range
        rng (Generator): bandwidth stream

    Returns:
        np.ndarray: (n, n) int matrix, zero diagonal
    """
    if not 1 <= low <= high:
        raise ValueError(f"Bandwidth range needs 1 <= low <= high, got [{low}, {high}]")
    costs = np.zeros((n_agents, n_agents), dtype=np.int64)
    upper = np.triu_indices(n_agents, k=1)
    costs[upper] = rng.integers(low, high + 1, size=len(upper[0]))
    return costs + costs.T


def broadcast_select(candidates: Sequence[CandidateComm], budget: int,
                     min_utility: float = 1e-9) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """
    Cost-blind greedy broadcast selection

    Candidates are grouped into broadcasts (sender a, subject h) that reach
    every receiver listed for the pair; a broadcast costs the sum of its
    pairwise costs and is worth the sum of its pairwise utilities.
    Broadcasts are taken in descending utility while the remaining budget
    admits their full cost.

    Returns:
        tuple: (bool mask over candidates, list of chosen (sender, subject))
    """
    groups: Dict[Tuple[int, int], List[int]] = {}
    for index, candidate in enumerate(candidates):
        groups.setdefault((candidate.sender, candidate.subject), []).append(index)

    scored = []
    for key, members in groups.items():
        value = sum(candidates[i].utility for i in members)
        cost = sum(candidates[i].bandwidth for i in members)
        scored.append((-value, key, cost, members))
    scored.sort(key=lambda item: (item[0], item[1]))

    chosen = np.zeros(len(candidates), dtype=bool)
    broadcasts = []
    remaining = budget
    for neg_value, key, cost, members in scored:
        if -neg_value < min_utility:
            break
        if cost <= remaining:
            chosen[members] = True
            broadcasts.append(key)
            remaining -= cost
    return chosen, broadcasts


class CommsInfrastructure:
    """Broker running one scheme for the whole of a trial"""

    def __init__(self, config, pairwise_bandwidth: np.ndarray, scheme: SchemeKind, collect_kappa: bool = False,
                 candidate_hook: Optional[Callable[[List[CandidateComm]], None]] = None):
        """
        Args:
            config (ScenarioConfig): trial configuration
            pairwise_bandwidth (np.ndarray): symmetric integer cost matrix
            scheme (SchemeKind): selection scheme
            collect_kappa (bool): keep raw kappa of every candidate for calibration
            candidate_hook (callable, optional): called with each epoch's candidate list
        """
        self.config = config
        self.pairwise_bandwidth = pairwise_bandwidth
        self.scheme = scheme
        self.params = UtilityParams.from_config(config)
        self.collect_kappa = collect_kappa
        self.kappa_samples: List[float] = []
        self.epoch_logs: List[EpochLog] = []
        self.candidate_hook = candidate_hook

    def bandwidth_cost(self, sender: int, receiver: int, subject: int) -> int:
        """Cost of one transfer; every subject's message has the same size"""
        return int(self.pairwise_bandwidth[sender, receiver])

    def select(self, candidates: Sequence[CandidateComm]) -> np.ndarray:
        """Chosen mask for the trial's scheme over an already-built candidate list"""
        budget = self.config.bandwidth_limit
        if self.scheme is SchemeKind.IKNAP:
            return solve_knapsack(candidates, budget, self.config.theta_epsilon,
                                  self.config.bandwidth_quantization).chosen
        if self.scheme is SchemeKind.BROADCAST_BASELINE:
            return broadcast_select(candidates, budget, self.config.theta_epsilon)[0]
        return np.zeros(len(candidates), dtype=bool)

    def build_candidates(self, now: float, belief_tables: Sequence[BeliefTable],
                         uploads: Sequence[Observation], paths: Sequence, progress: Sequence[float]):
        return enumerate_candidates(
            uploads, belief_tables, paths, progress, self.pairwise_bandwidth, self.params,
            self.config.sim_dt, now,
            process_noise=(self.config.process_noise_pos, self.config.process_noise_vel),
            bandwidth_cost=self.bandwidth_cost,
        )

    def run_epoch(self, now: float, belief_tables: Sequence[BeliefTable], uploads: Sequence[Observation],
                  paths: Sequence, progress: Sequence[float],
                  candidates: Optional[List[CandidateComm]] = None) -> Tuple[List[Delivery], EpochLog]:
        """
        One pass of the observation-sharing loop

        Args:
            now (float): epoch time (s)
            belief_tables (list): every agent's BeliefTable, updated in place
            uploads (list): observations gathered since the previous epoch
            paths (list): every agent's PlannedPath
            progress (list): every agent's current arclength
            candidates (list, optional): prebuilt candidate list for this state

        Returns:
            tuple: (deliveries made, EpochLog)
        """
        q, q_v = self.config.process_noise_pos, self.config.process_noise_vel
        budget = self.config.bandwidth_limit
        log = EpochLog(time=now, scheme=self.scheme.name, bandwidth_limit=budget)

        if self.scheme is SchemeKind.NO_COMM:
            self.epoch_logs.append(log)
            return [], log

        for table in belief_tables:
            table.predict_all(now, q, q_v)

        if candidates is None:
            candidates = self.build_candidates(now, belief_tables, uploads, paths, progress)
        if self.collect_kappa:
            self.kappa_samples.extend(c.kappa for c in candidates)
        if self.candidate_hook is not None:
            self.candidate_hook(candidates)

        started = time.perf_counter()
        chosen = self.select(candidates)
        log.optimizer_time = time.perf_counter() - started

        messages = latest_uploads(uploads)
        deliveries = []
        for index in np.flatnonzero(chosen):
            candidate = candidates[index]
            obs = propagate_observation(messages[(candidate.sender, candidate.subject)], now, q, q_v)
            table = belief_tables[candidate.receiver]
            h = candidate.subject
            table.means[h], table.variances[h] = fuse_arrays(table.means[h], table.variances[h],
                                                             obs.mean, obs.variance)
            deliveries.append(Delivery(candidate.sender, candidate.receiver, h,
                                       candidate.bandwidth, candidate.utility))

        log.candidate_count = len(candidates)
        log.chosen_count = int(np.count_nonzero(chosen))
        log.deliveries = len(deliveries)
        log.bandwidth_used = int(sum(d.bandwidth for d in deliveries))
        log.delivered_utility = math.fsum(d.utility for d in deliveries)
        if log.bandwidth_used > budget:
            raise AssertionError(f"Epoch at t={now} used {log.bandwidth_used} > budget {budget}")

        logger.debug(f"{self.scheme.name} epoch t={now:.2f}: {log.chosen_count}/{log.candidate_count} "
                     f"chosen, bandwidth {log.bandwidth_used}/{budget}")
        self.epoch_logs.append(log)
        return deliveries, log


if __name__ == "__main__":
    from config_loader import ScenarioConfig

    config = ScenarioConfig(n_agents=3, m_subjects=1)
    costs = sample_pairwise_bandwidth(3, 1, 10, np.random.default_rng(0))
    print(f"Pairwise costs:\n{costs}")
    items = [CandidateComm(0, 1, 0, 4, 3.0), CandidateComm(0, 2, 0, 4, 3.0), CandidateComm(1, 2, 0, 2, 2.5)]
    print(f"Broadcast picks: {broadcast_select(items, 6)[1]}")
