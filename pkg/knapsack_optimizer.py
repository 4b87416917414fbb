#!/usr/bin/env python3
"""
Knapsack Optimizer Component for the iKnap Simulator

Every communication epoch this module lists the candidate transfers
(sender a, receiver b, subject h), prices each with a bandwidth cost and a
utility, and picks the utility-maximal subset whose total cost fits the
bandwidth budget with an exact 0/1 knapsack dynamic program.
"""

import math
import time
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from perception import BeliefTable, Observation, propagate_observation
from utility import UtilityParams, constant_velocity_track, forward_track, kappa_arrays, tau_from_tracks, theta

# Set up logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('knapsack_optimizer')

# relative tolerance under which two subset utilities count as tied
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class CandidateComm:
    sender: int
    receiver: int
    subject: int
    bandwidth: int
    utility: float
    kappa: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        if self.sender == self.receiver:
            raise ValueError(f"Agent {self.sender} cannot send to itself")
        if self.bandwidth < 1:
            raise ValueError(f"Bandwidth cost must be >= 1, got {self.bandwidth}")
        if not (self.utility >= 0 and math.isfinite(self.utility)):
            raise ValueError(f"Utility must be finite and non-negative, got {self.utility}")


@dataclass
class SelectionResult:
    chosen: np.ndarray        # bool mask over the candidate list
    total_utility: float
    total_bandwidth: int
    solve_time: float = 0.0

    @property
    def chosen_indices(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.chosen)]


def _empty_result(count: int, solve_time: float = 0.0) -> SelectionResult:
    return SelectionResult(np.zeros(count, dtype=bool), 0.0, 0, solve_time)


def _finish(candidates: Sequence[CandidateComm], chosen: np.ndarray, solve_time: float) -> SelectionResult:
    picked = [candidates[i] for i in np.flatnonzero(chosen)]
    return SelectionResult(
        chosen=chosen,
        total_utility=math.fsum(c.utility for c in picked),
        total_bandwidth=int(sum(c.bandwidth for c in picked)),
        solve_time=solve_time,
    )


def quantize_bandwidth(costs: Sequence[float], budget: float, quantum: float = 1.0) -> Tuple[np.ndarray, int]:
    """
    Map costs and budget onto an integer capacity axis of step `quantum`

    Costs round up and the budget rounds down, so any selection feasible in
    quantized units is feasible in the original units.

    Returns:
        tuple: (integer costs, integer budget)
    """
    if quantum <= 0:
        raise ValueError("Quantum must be positive")
    costs = np.asarray(costs, dtype=float)
    units = np.ceil(costs / quantum - 1e-12).astype(np.int64)
    return np.maximum(units, 1), int(math.floor(budget / quantum + 1e-12))


def _better(value_a, bw_a, value_b, bw_b):
    """Elementwise: does option a beat option b (utility first, then lower bandwidth)?"""
    tolerance = TIE_TOLERANCE * np.maximum(1.0, np.maximum(np.abs(value_a), np.abs(value_b)))
    tied = np.abs(value_a - value_b) <= tolerance
    return np.where(tied, bw_a <= bw_b, value_a > value_b)


def _cost_groups(costs: np.ndarray, values: np.ndarray, usable: np.ndarray, capacity: int) -> Dict[int, np.ndarray]:
    """
    Usable items grouped by cost, best first (utility descending, then index)

    A group of cost c keeps only its first capacity // c items. Within one
    cost the selection order always prefers earlier members of the group, so
    no optimal set contains an item past that cut.
    """
    index = np.flatnonzero(usable)
    order = index[np.lexsort((index, -values[index], costs[index]))]
    sorted_costs = costs[order]
    groups = {}
    for beta in np.unique(sorted_costs):
        members = order[sorted_costs == beta]
        groups[int(beta)] = members[:capacity // int(beta)]
    return groups


def _grouped_selection(groups: Dict[int, np.ndarray], values: np.ndarray, capacity: int, count: int,
                       tolerance: float) -> Optional[np.ndarray]:
    """
    Knapsack over cost groups; taking j items of a group means taking its j best

    Each group is one vectorised max over (j, capacity). Returns None when two
    options come within `tolerance` of each other anywhere in the table, so
    the caller can settle the tie item by item.
    """
    caps = np.arange(capacity + 1)
    best_value = np.zeros(capacity + 1)
    picks = []
    for beta, members in groups.items():
        prefix = np.concatenate(([0.0], np.cumsum(values[members])))
        taken = np.arange(len(prefix))[:, None]
        source = caps[None, :] - beta * taken
        valid = source >= 0
        options = np.where(valid, best_value[np.maximum(source, 0)] + prefix[:, None], -np.inf)
        top = options.max(axis=0)
        if np.any(np.count_nonzero(options >= top - tolerance, axis=0) > 1):
            return None
        picks.append((beta, members, np.argmax(options, axis=0)))
        best_value = top

    chosen = np.zeros(count, dtype=bool)
    remaining = capacity
    for beta, members, pick in reversed(picks):
        taken = int(pick[remaining])
        chosen[members[:taken]] = True
        remaining -= taken * beta
    return chosen


def _itemwise_selection(items: np.ndarray, costs: np.ndarray, values: np.ndarray, capacity: int,
                        count: int) -> np.ndarray:
    """Suffix table over (item, remaining capacity) with the full tie-breaking order"""
    take = np.zeros((len(items), capacity + 1), dtype=bool)
    best_value = np.zeros(capacity + 1)
    best_bw = np.zeros(capacity + 1, dtype=np.int64)
    for row in range(len(items) - 1, -1, -1):
        i = items[row]
        beta = int(costs[i])
        value_take = values[i] + best_value[:capacity + 1 - beta]
        bw_take = beta + best_bw[:capacity + 1 - beta]
        wins = _better(value_take, bw_take, best_value[beta:], best_bw[beta:])
        take[row, beta:] = wins
        best_value[beta:] = np.where(wins, value_take, best_value[beta:])
        best_bw[beta:] = np.where(wins, bw_take, best_bw[beta:])

    chosen = np.zeros(count, dtype=bool)
    remaining = capacity
    for row, i in enumerate(items):
        if take[row, remaining]:
            chosen[i] = True
            remaining -= int(costs[i])
    return chosen


def solve_knapsack(candidates: Sequence[CandidateComm], budget: int, min_utility: float = 1e-9,
                   quantum: float = 1.0) -> SelectionResult:
    """
    Exact 0/1 knapsack over the candidate list

    Candidates are grouped by cost and each group is cut to the most items
    of that cost the budget can hold. The DP then runs over capacities 0..B
    one cost group at a time. When two options tie anywhere in that table
    the surviving items go through an item-by-item suffix table instead.
    Ties in utility go to the lower total bandwidth and then to the
    lexicographically smallest set of chosen indices. Time is
    O(N log N + B * K) with K <= N the surviving items; space is O(K * B).

    Args:
        candidates (list): CandidateComm items
        budget (int): bandwidth budget B >= 0
        min_utility (float): candidates below this utility are never chosen
        quantum (float): capacity step for non-unit costs

    Returns:
        SelectionResult
    """
    started = time.perf_counter()
    count = len(candidates)
    if budget < 0:
        raise ValueError(f"Bandwidth budget must be >= 0, got {budget}")
    if count == 0 or budget == 0:
        return _empty_result(count, time.perf_counter() - started)

    costs, capacity = quantize_bandwidth([c.bandwidth for c in candidates], budget, quantum)
    values = np.array([c.utility for c in candidates], dtype=float)
    usable = (values >= min_utility) & (costs <= capacity)
    if not usable.any():
        return _empty_result(count, time.perf_counter() - started)

    groups = _cost_groups(costs, values, usable, capacity)
    tolerance = TIE_TOLERANCE * max(1.0, float(np.sum(values[usable])))
    chosen = _grouped_selection(groups, values, capacity, count, tolerance)
    if chosen is None:
        items = np.sort(np.concatenate(list(groups.values())))
        chosen = _itemwise_selection(items, costs, values, capacity, count)

    result = _finish(candidates, chosen, time.perf_counter() - started)
    if result.total_bandwidth > budget:
        raise AssertionError(f"Knapsack selection uses {result.total_bandwidth} > budget {budget}")
    return result


def brute_force_knapsack(candidates: Sequence[CandidateComm], budget: int,
                         min_utility: float = 1e-9) -> SelectionResult:
    """Exhaustive search over all 2^N subsets with the same tie-breaking (N <= 20)"""
    started = time.perf_counter()
    count = len(candidates)
    if count > 20:
        raise ValueError(f"Brute force is limited to 20 candidates, got {count}")
    if count == 0 or budget <= 0:
        return _empty_result(count, time.perf_counter() - started)

    values = np.array([c.utility for c in candidates], dtype=float)
    costs = np.array([c.bandwidth for c in candidates], dtype=np.int64)
    usable = values >= min_utility

    masks = (np.arange(2 ** count)[:, None] >> np.arange(count)[None, :]) & 1
    masks = masks[~np.any(masks.astype(bool) & ~usable[None, :], axis=1)]
    totals = masks @ values
    bandwidths = masks @ costs
    feasible = bandwidths <= budget
    masks, totals, bandwidths = masks[feasible], totals[feasible], bandwidths[feasible]

    top = totals.max()
    keep = totals >= top - TIE_TOLERANCE * max(1.0, abs(top))
    masks, bandwidths = masks[keep], bandwidths[keep]
    keep = bandwidths == bandwidths.min()
    masks = masks[keep]
    # among equal-cost ties, earlier indices win
    order_key = masks @ (2 ** np.arange(count - 1, -1, -1))
    chosen = masks[int(np.argmax(order_key))].astype(bool)
    return _finish(candidates, chosen, time.perf_counter() - started)


def latest_uploads(uploads: Sequence[Observation]) -> Dict[Tuple[int, int], Observation]:
    """Keep the newest observation per (observer, subject); later entries win ties"""
    latest: Dict[Tuple[int, int], Observation] = {}
    for obs in uploads:
        key = (obs.observer, obs.subject)
        if key not in latest or obs.time >= latest[key].time:
            latest[key] = obs
    return latest


def enumerate_candidates(
    uploads: Sequence[Observation],
    belief_tables: Sequence[BeliefTable],
    paths: Sequence,
    progress: Sequence[float],
    pairwise_bandwidth: np.ndarray,
    params: UtilityParams,
    sim_dt: float,
    now: float,
    process_noise: Tuple[float, float] = (0.0, 0.0),
    bandwidth_cost: Optional[Callable[[int, int, int], int]] = None
) -> List[CandidateComm]:
    """
    Build one CandidateComm per (a, b, h) with a fresh observation of h held by a

    Args:
        uploads (list): observations gathered during the current epoch
        belief_tables (list): every agent's beliefs, already predicted to `now`
        paths (list): every agent's PlannedPath
        progress (list): every agent's current arclength
        pairwise_bandwidth (np.ndarray): symmetric integer cost matrix
        params (UtilityParams): utility weights and horizon
        sim_dt (float): sampling step for the tau roll-out
        now (float): epoch time; older observations are propagated up to it
        process_noise (tuple): (q, q_v) used for that propagation
        bandwidth_cost (callable, optional): per-(a, b, h) cost hook

    Returns:
        list: candidates sorted by (sender, receiver, subject)
    """
    n_agents = len(belief_tables)
    q, q_v = process_noise

    receiver_tracks: Dict[int, np.ndarray] = {}
    candidates: List[CandidateComm] = []
    for (a, h), obs in sorted(latest_uploads(uploads).items()):
        targets = [b for b in range(n_agents) if b != a]
        if not targets:
            continue
        obs = propagate_observation(obs, now, q, q_v)

        prior_mean = np.stack([belief_tables[b].means[h] for b in targets])
        prior_var = np.stack([belief_tables[b].variances[h] for b in targets])
        kappas = kappa_arrays(obs.mean, obs.variance, prior_mean, prior_var)

        subject_track = constant_velocity_track(belief_tables[a].means[h], params.horizon, sim_dt)
        for b, k in zip(targets, kappas):
            if b not in receiver_tracks:
                receiver_tracks[b] = forward_track(paths[b], progress[b], paths[b].target_speed,
                                                   params.horizon, sim_dt)
            t = tau_from_tracks(receiver_tracks[b], subject_track, params.d_min)
            cost = bandwidth_cost(a, b, h) if bandwidth_cost else int(pairwise_bandwidth[a, b])
            candidates.append(CandidateComm(
                sender=a, receiver=b, subject=h, bandwidth=cost,
                utility=float(theta(k, t, params)), kappa=float(k), tau=t,
            ))

    candidates.sort(key=lambda c: (c.sender, c.receiver, c.subject))
    return candidates


if __name__ == "__main__":
    rng = np.random.default_rng(1)
    items = [
        CandidateComm(i % 3, (i + 1) % 3, i % 2, int(rng.integers(1, 11)), float(rng.uniform(0, 2)))
        for i in range(12)
    ]
    dp = solve_knapsack(items, 20)
    exhaustive = brute_force_knapsack(items, 20)
    print(f"DP: utility {dp.total_utility:.4f}, bandwidth {dp.total_bandwidth}, chosen {dp.chosen_indices}")
    print(f"Brute force: utility {exhaustive.total_utility:.4f}, chosen {exhaustive.chosen_indices}")
    print(f"DP time {dp.solve_time * 1e3:.2f} ms")
