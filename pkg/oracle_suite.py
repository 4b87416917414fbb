#!/usr/bin/env python3
"""
Oracle Suite for the iKnap Simulator

Brute-force and closed-form cross-checks of the optimizer, the belief
arithmetic, the stopping logic and the trial loop. Each suite returns a
JSON-friendly report with a pass flag; run_oracles() runs a chosen set.
"""

import time
import math
import logging
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.stats import norm

from comms_infrastructure import SchemeKind, broadcast_select
from config_loader import ScenarioConfig
from experiment_harness import (
    SweepSpec, TrialSimulation, aggregate, apply_sweep_value, derive_trial_seed, paired_improvement, run_sweep,
    run_trial,
)
from knapsack_optimizer import CandidateComm, brute_force_knapsack, solve_knapsack
from navigation import (
    PDGains, ReferenceState, advance_reference, agent_control, assess_collision, plan_path, sample_offsets,
)
from perception import GaussianBelief, fuse_arrays, kl_divergence
from results_writer import TRIAL_COLUMNS, format_cell
from world_model import AgentRecord, BodyState, WorldState, advance_world

# Set up logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('oracle_suite')


def random_candidates(rng: np.random.Generator, count: int, cost_range=(1, 10)) -> List[CandidateComm]:
    """Synthetic candidates with distinct (sender, receiver, subject) triples"""
    items = []
    for i in range(count):
        sender = i % 7
        receiver = (sender + 1 + i // 7) % 8
        if receiver == sender:
            receiver = (receiver + 1) % 8
        items.append(CandidateComm(sender, receiver, i, int(rng.integers(cost_range[0], cost_range[1] + 1)),
                                   float(rng.uniform(0.0, 10.0))))
    return items


def knapsack_optimality(instances: int = 1000, seed: int = 0) -> Dict[str, Any]:
    """DP utility equals exhaustive 2^N search on random small instances"""
    rng = np.random.default_rng(seed)
    started = time.perf_counter()
    mismatches = 0
    for _ in range(instances):
        items = random_candidates(rng, int(rng.integers(0, 16)))
        budget = int(rng.integers(0, 51))
        dp = solve_knapsack(items, budget)
        exhaustive = brute_force_knapsack(items, budget)
        if dp.total_bandwidth > budget or not math.isclose(dp.total_utility, exhaustive.total_utility,
                                                           rel_tol=1e-9, abs_tol=1e-12):
            mismatches += 1
    elapsed = time.perf_counter() - started
    return {"name": "knapsack_optimality", "passed": mismatches == 0, "instances": instances,
            "mismatches": mismatches, "seconds": elapsed}


def runtime_scaling(sizes: Sequence[int] = (5, 10, 15, 20), repeats: int = 3, seed: int = 0,
                    slack: float = 3.0) -> Dict[str, Any]:
    """
    Solve time stays within `slack` times a fitted c * N * B

    N = n(n-1)m candidates with n = m and B = 5n. The fastest of `repeats`
    runs is used for every grid point.
    """
    rng = np.random.default_rng(seed)
    work, seconds = [], []
    for n in sizes:
        count = n * (n - 1) * n
        budget = 5 * n
        items = random_candidates(rng, count)
        best = min(solve_knapsack(items, budget).solve_time for _ in range(repeats))
        work.append(count * budget)
        seconds.append(best)
    work_arr = np.array(work, dtype=float)
    seconds_arr = np.array(seconds)
    c = float(np.dot(work_arr, seconds_arr) / np.dot(work_arr, work_arr))
    # 1 ms absorbs timer noise on the smallest grid points
    bounded = bool(np.all(seconds_arr <= slack * c * work_arr + 1e-3))
    return {"name": "runtime_scaling", "passed": bounded, "sizes": list(sizes), "work": work,
            "seconds": seconds, "fitted_c": c}


def fusion_precision(cases: int = 10000, seed: int = 0) -> Dict[str, Any]:
    """Posterior precision equals prior precision plus observation precision, axis by axis"""
    rng = np.random.default_rng(seed)
    prior_var = 10.0 ** rng.uniform(-4, 4, size=(cases, 4))
    obs_var = 10.0 ** rng.uniform(-4, 4, size=(cases, 4))
    means = rng.normal(0.0, 10.0, size=(cases, 4))
    obs = rng.normal(0.0, 10.0, size=(cases, 4))
    _, post_var = fuse_arrays(means, prior_var, obs, obs_var)
    expected = 1.0 / prior_var + 1.0 / obs_var
    worst = float(np.max(np.abs(1.0 / post_var - expected) / expected))
    return {"name": "fusion_precision", "passed": worst <= 1e-12, "cases": cases, "worst_relative_error": worst}


def _axis_kl_quadrature(mu_p: float, var_p: float, mu_q: float, var_q: float) -> float:
    sd_p, sd_q = math.sqrt(var_p), math.sqrt(var_q)

    def integrand(x):
        return norm.pdf(x, mu_p, sd_p) * (norm.logpdf(x, mu_p, sd_p) - norm.logpdf(x, mu_q, sd_q))

    value, _ = integrate.quad(integrand, mu_p - 12.0 * sd_p, mu_p + 12.0 * sd_p, limit=200)
    return value


def kl_quadrature(pairs: int = 100, seed: int = 0) -> Dict[str, Any]:
    """Closed-form KL matches numerical quadrature on random diagonal belief pairs"""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        mean_p, mean_q = rng.normal(0.0, 2.0, size=4), rng.normal(0.0, 2.0, size=4)
        var_p, var_q = rng.uniform(0.1, 4.0, size=4), rng.uniform(0.1, 4.0, size=4)
        post = GaussianBelief(0, 0, mean_p, var_p, 0.0)
        prior = GaussianBelief(0, 0, mean_q, var_q, 0.0)
        numeric = sum(_axis_kl_quadrature(mean_p[k], var_p[k], mean_q[k], var_q[k]) for k in range(4))
        worst = max(worst, abs(kl_divergence(post, prior) - numeric))
    return {"name": "kl_quadrature", "passed": worst <= 1e-3, "pairs": pairs, "worst_absolute_error": worst}


def safety_invariant(geometries: int = 100, seed: int = 0, config: Optional[ScenarioConfig] = None) -> Dict[str, Any]:
    """
    With exact beliefs of a subject parked on its path an agent never enters the collision radius

    Each geometry is an open 30 m field with one agent and one motionless
    subject placed within a radius of the straight start-goal line.
    """
    config = config or ScenarioConfig()
    rng = np.random.default_rng(seed)
    gains = PDGains(config.kp, config.kd)
    offsets = sample_offsets(config.collision_samples, rng)
    radius = config.collision_radius
    closest_overall = math.inf
    breaches = 0
    for _ in range(geometries):
        start = rng.uniform(0.0, 30.0, size=2)
        heading = rng.uniform(0.0, 2.0 * np.pi)
        length = rng.uniform(10.0, 20.0)
        goal = start + length * np.array([np.cos(heading), np.sin(heading)])
        path = plan_path(start, goal, [], config.clearance, target_speed=config.agent_target_speed)
        along = rng.uniform(3.0, length - 2.0)
        lateral = rng.uniform(-0.9, 0.9) * radius
        normal = np.array([-np.sin(heading), np.cos(heading)])
        parked = path.point_at(along) + lateral * normal
        belief = GaussianBelief(0, 0, np.array([parked[0], parked[1], 0.0, 0.0]), np.zeros(4), 0.0)

        agent = AgentRecord(BodyState(start.copy(), np.zeros(2)), start, goal, path, config.agent_v_max,
                            reference=ReferenceState())
        world = WorldState(0, config.sim_dt, [agent], [], [], 30.0)
        closest = math.inf
        for _ in range(int((length / config.agent_target_speed + 10.0) / config.sim_dt)):
            rec = world.agents[0]
            rec.progress = path.project(rec.state.position, hint=rec.progress)
            assessment = assess_collision(path, rec.progress, [belief], config.horizon, radius,
                                          config.sim_dt, offsets, config.collision_sample_fraction)
            rec.reference = advance_reference(path, rec.reference, rec.progress, assessment, config.sim_dt,
                                              config.a_max, config.stop_ramp, config.stop_buffer, config.max_lead)
            accel = agent_control(rec.state, path, rec.reference, gains, config.a_max)
            world = advance_world(world, [accel], [], config.sim_dt)
            closest = min(closest, float(np.linalg.norm(world.agents[0].state.position - parked)))
        closest_overall = min(closest_overall, closest)
        if closest < radius:
            breaches += 1
    return {"name": "safety_invariant", "passed": breaches == 0, "geometries": geometries,
            "breaches": breaches, "closest_approach": closest_overall}


def determinism(trials: int = 2, config: Optional[ScenarioConfig] = None) -> Dict[str, Any]:
    """Repeating a trial with the same seed reproduces its results row exactly"""
    config = config or ScenarioConfig(n_agents=3, m_subjects=3, n_walls=5, max_sim_time=40.0)
    differing = []
    for trial_index in range(trials):
        seeded = config.with_updates(seed=derive_trial_seed(0, 0, trial_index))
        for scheme in SchemeKind:
            first, second = run_trial(seeded, scheme), run_trial(seeded, scheme)
            row_a = [format_cell(getattr(first, c)) for c in TRIAL_COLUMNS]
            row_b = [format_cell(getattr(second, c)) for c in TRIAL_COLUMNS]
            if row_a != row_b:
                differing.append({"seed": seeded.seed, "scheme": scheme.name})
    return {"name": "determinism", "passed": not differing, "trials": trials, "differing": differing}


def delivered_utility_dominance(epochs: int = 1000, config: Optional[ScenarioConfig] = None,
                                base_seed: int = 0) -> Dict[str, Any]:
    """
    On every logged epoch state the knapsack selection is worth at least the broadcast selection

    IKNAP trials are run until `epochs` non-empty epochs have been compared.
    """
    config = config or ScenarioConfig()
    compared = 0
    violations = 0
    worst_gap = 0.0

    def compare(candidates: List[CandidateComm]):
        nonlocal compared, violations, worst_gap
        if not candidates or compared >= epochs:
            return
        knapsack_value = solve_knapsack(candidates, config.bandwidth_limit, config.theta_epsilon).total_utility
        chosen, _ = broadcast_select(candidates, config.bandwidth_limit, config.theta_epsilon)
        broadcast_value = math.fsum(c.utility for c, pick in zip(candidates, chosen) if pick)
        gap = broadcast_value - knapsack_value
        worst_gap = max(worst_gap, gap)
        # items below theta_epsilon are pruned from the knapsack only
        if gap > 1e-9 * max(1.0, abs(knapsack_value)) + len(candidates) * config.theta_epsilon:
            violations += 1
        compared += 1

    trial_index = 0
    while compared < epochs and trial_index < 10 * max(epochs, 1):
        seeded = config.with_updates(seed=derive_trial_seed(base_seed, 0, trial_index))
        simulation = TrialSimulation(seeded, SchemeKind.IKNAP)
        simulation.comms.candidate_hook = compare
        while not simulation.done and compared < epochs:
            simulation.step()
        trial_index += 1
    return {"name": "delivered_utility_dominance", "passed": violations == 0 and compared > 0,
            "epochs": compared, "violations": violations, "worst_gap": worst_gap, "trials": trial_index}


def directional_reproduction(trials: int = 100, config: Optional[ScenarioConfig] = None, base_seed: int = 0,
                             min_improvement: float = 0.05, workers: int = 1) -> Dict[str, Any]:
    """
    Sharing shortens trials: paired makespan gain of IKNAP over NO_COMM, and IKNAP no slower than broadcast

    Every scheme runs the same seeded scenarios; failed trials are left out
    of the pairing.
    """
    config = config or ScenarioConfig()
    spec = SweepSpec(parameter="alpha", values=[config.alpha], trials_per_value=trials, base_config=config,
                     base_seed=base_seed, name="directional")
    results = run_sweep(spec, workers=workers)
    summary = aggregate(results)
    means = {row["scheme"]: row["mean_makespan"] for row in summary}
    collisions = {row["scheme"]: row["mean_agent_subject_collisions"] for row in summary}
    gain = paired_improvement(results, SchemeKind.IKNAP.name, SchemeKind.NO_COMM.name).get(0, float("nan"))
    beats_silence = means[SchemeKind.IKNAP.name] < means[SchemeKind.NO_COMM.name] and gain >= min_improvement
    beats_broadcast = means[SchemeKind.IKNAP.name] <= means[SchemeKind.BROADCAST_BASELINE.name]
    return {"name": "directional_reproduction", "passed": bool(beats_silence and beats_broadcast),
            "trials": trials, "failed": sum(1 for r in results if not r.ok), "mean_makespan": means,
            "mean_agent_subject_collisions": collisions, "paired_improvement_over_no_comm": gain}


def _best_time(function: Callable, repeats: int, *args) -> float:
    best = math.inf
    for _ in range(repeats):
        started = time.perf_counter()
        function(*args)
        best = min(best, time.perf_counter() - started)
    return best


def runtime_ratio(epochs: int = 20, agents: int = 20, max_ratio: float = 1.5, repeats: int = 3,
                  config: Optional[ScenarioConfig] = None, base_seed: int = 0) -> Dict[str, Any]:
    """
    Knapsack selection costs at most `max_ratio` times the broadcast selection at n = m = `agents`

    Candidate lists are captured from IKNAP trials (B = 5n) and both
    selections are timed on the same lists, fastest of `repeats` each.
    """
    config = apply_sweep_value(config or ScenarioConfig(), "n_plus_m", 2 * agents)
    budget = config.bandwidth_limit
    knapsack_times: List[float] = []
    broadcast_times: List[float] = []
    sizes: List[int] = []

    def compare(candidates: List[CandidateComm]):
        if not candidates or len(sizes) >= epochs:
            return
        knapsack_times.append(_best_time(solve_knapsack, repeats, candidates, budget, config.theta_epsilon,
                                         config.bandwidth_quantization))
        broadcast_times.append(_best_time(broadcast_select, repeats, candidates, budget, config.theta_epsilon))
        sizes.append(len(candidates))

    trial_index = 0
    while len(sizes) < epochs and trial_index < 10 * max(epochs, 1):
        seeded = config.with_updates(seed=derive_trial_seed(base_seed, 0, trial_index))
        simulation = TrialSimulation(seeded, SchemeKind.IKNAP)
        simulation.comms.candidate_hook = compare
        while not simulation.done and len(sizes) < epochs:
            simulation.step()
        trial_index += 1

    knapsack_mean = float(np.mean(knapsack_times)) if knapsack_times else math.nan
    broadcast_mean = float(np.mean(broadcast_times)) if broadcast_times else math.nan
    ratio = knapsack_mean / broadcast_mean if broadcast_times else math.nan
    return {"name": "runtime_ratio", "passed": bool(sizes) and bool(ratio <= max_ratio), "epochs": len(sizes),
            "mean_candidates": float(np.mean(sizes)) if sizes else 0.0, "mean_knapsack_seconds": knapsack_mean,
            "mean_broadcast_seconds": broadcast_mean, "ratio": ratio}


SUITES: Dict[str, Callable[[bool], Dict[str, Any]]] = {
    "knapsack": lambda fast: knapsack_optimality(200 if fast else 1000),
    "scaling": lambda fast: runtime_scaling((5, 10) if fast else (5, 10, 15, 20)),
    "fusion": lambda fast: fusion_precision(2000 if fast else 10000),
    "kl": lambda fast: kl_quadrature(30 if fast else 100),
    "safety": lambda fast: safety_invariant(20 if fast else 100),
    "determinism": lambda fast: determinism(1 if fast else 2),
    "dominance": lambda fast: delivered_utility_dominance(200 if fast else 1000),
    "runtime_ratio": lambda fast: runtime_ratio(5 if fast else 20),
    "directional": lambda fast: directional_reproduction(20 if fast else 100),
}


def run_oracles(names: Optional[Sequence[str]] = None, fast: bool = False) -> Dict[str, Any]:
    """
    Run the selected oracle suites

    Args:
        names (list, optional): suite names from SUITES; all when omitted
        fast (bool): reduced sizes

    Returns:
        dict: {"passed": bool, "suites": [report, ...]}
    """
    names = list(names) if names else list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"Unknown oracle suite(s): {', '.join(unknown)}. Choose from: {', '.join(SUITES)}")

    reports = []
    for name in names:
        started = time.perf_counter()
        logger.info(f"Running oracle suite '{name}'")
        try:
            report = SUITES[name](fast)
        except Exception as e:
            logger.error(f"Oracle suite '{name}' crashed: {str(e)}")
            report = {"name": name, "passed": False, "error": f"{type(e).__name__}: {str(e)}"}
        report["wall_seconds"] = time.perf_counter() - started
        logger.info(f"Oracle suite '{name}': {'PASS' if report['passed'] else 'FAIL'}")
        reports.append(report)
    return {"passed": all(r["passed"] for r in reports), "suites": reports}


if __name__ == "__main__":
    import json
    print(json.dumps(run_oracles(["knapsack", "fusion", "kl"], fast=True), indent=2))
