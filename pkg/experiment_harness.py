#!/usr/bin/env python3
"""
Experiment Harness for the iKnap Simulator

Runs closed-loop trials (subjects on splines, agents observing, sharing,
stopping and tracking their paths) and sweeps one parameter over seeded,
paired trials for every communication scheme.
"""

import os
import copy
import json
import math
import logging
import itertools
import concurrent.futures
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from comms_infrastructure import CommsInfrastructure, EpochLog, SchemeKind, sample_pairwise_bandwidth
from config_loader import ConfigError, ScenarioConfig, config_digest, field_names, load_config
from navigation import (
    CollisionAssessment, PDGains, ReferenceState, advance_reference, advance_subject_reference,
    agent_control, assess_collision, sample_offsets, subject_control,
)
from perception import BeliefTable, ObservationModel, fuse_arrays, observe_visible
from world_model import WorldState, advance_world, generate_scenario, trial_streams

# Set up logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('experiment_harness')

DERIVED_PARAMETERS = ("n_plus_m", "frequency", "bandwidth_ratio", "bandwidth_range", "horizon")
FAST_TRIALS = 20


@dataclass
class TrialResult:
    scheme: str
    config_digest: str
    seed: int
    makespan: float = 0.0
    timed_out: bool = False
    agents_finished: int = 0
    agent_subject_collisions: int = 0
    agent_agent_collisions: int = 0
    epochs: int = 0
    mean_bandwidth_used: float = 0.0
    max_bandwidth_used: int = 0
    bandwidth_limit: int = 0
    total_deliveries: int = 0
    delivered_utility: float = 0.0
    mean_optimizer_time: float = 0.0
    max_optimizer_time: float = 0.0
    parameter: str = ""
    value: Any = ""
    value_index: int = 0
    trial_index: int = 0
    status: str = "ok"
    error: str = ""
    epoch_logs: List[EpochLog] = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SweepSpec:
    parameter: str
    values: List[Any]
    trials_per_value: int = 100
    schemes: List[SchemeKind] = field(default_factory=lambda: list(SchemeKind))
    base_config: ScenarioConfig = field(default_factory=ScenarioConfig)
    base_seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.parameter not in field_names() and self.parameter not in DERIVED_PARAMETERS:
            raise ConfigError(f"Unknown sweep parameter '{self.parameter}'")
        if not self.values:
            raise ConfigError("A sweep needs at least one value")
        if self.trials_per_value < 1:
            raise ConfigError("trials_per_value must be >= 1")
        self.schemes = [s if isinstance(s, SchemeKind) else SchemeKind.parse(s) for s in self.schemes]
        for value in self.values:
            apply_sweep_value(self.base_config, self.parameter, value)
        if not self.name:
            self.name = self.parameter

    @classmethod
    def from_file(cls, path: str, fast: bool = False) -> "SweepSpec":
        """
        Load a sweep from a JSON file

        Keys: parameter, values, trials_per_value, schemes, base_seed, name,
        and either base_config (inline mapping) or base_config_file (a
        scenario file, relative to the sweep file).
        """
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read sweep file {path}: {str(e)}")

        config_file = data.get("base_config_file")
        if config_file and not os.path.isabs(config_file):
            config_file = os.path.join(os.path.dirname(path), config_file)
        base = load_config(config_file, overrides=data.get("base_config") or {})

        trials = int(data.get("trials_per_value", 100))
        if fast:
            trials = min(trials, FAST_TRIALS)
        return cls(
            parameter=data["parameter"],
            values=list(data["values"]),
            trials_per_value=trials,
            schemes=[SchemeKind.parse(s) for s in data.get("schemes", [s.name for s in SchemeKind])],
            base_config=base,
            base_seed=int(data.get("base_seed", 0)),
            name=data.get("name", ""),
        )


def apply_sweep_value(config: ScenarioConfig, parameter: str, value) -> ScenarioConfig:
    """
    Configuration for one point of a sweep

    Derived axes:
        n_plus_m: n = ceil(v/2), m = floor(v/2), B rescaled to keep B/n
        frequency: comm_period = 1/v
        bandwidth_ratio: B = v * n
        bandwidth_range: pairwise costs uniform in [1, 1 + v]
        horizon: look-ahead horizon t_H = v
    Any other name must be a ScenarioConfig field.
    """
    if parameter == "n_plus_m":
        total = int(value)
        n = (total + 1) // 2
        ratio = config.bandwidth_limit / config.n_agents if config.n_agents else 0.0
        return config.with_updates(n_agents=n, m_subjects=total - n, bandwidth_limit=int(round(ratio * n)))
    if parameter == "frequency":
        if float(value) <= 0:
            raise ConfigError(f"Communication frequency must be positive, got {value}")
        return config.with_updates(comm_period=1.0 / float(value))
    if parameter == "bandwidth_ratio":
        return config.with_updates(bandwidth_limit=int(round(float(value) * config.n_agents)))
    if parameter == "bandwidth_range":
        return config.with_updates(bandwidth_min=1, bandwidth_max=1 + int(value))
    return config.with_updates(**{parameter: value})


def derive_trial_seed(base_seed: int, value_index: int, trial_index: int) -> int:
    """Seed shared by every scheme for trial `trial_index` of value `value_index`"""
    return int(np.random.SeedSequence([base_seed, value_index, trial_index]).generate_state(1)[0])


class TrialSimulation:
    """One closed-loop trial, advanced tick by tick with step()"""

    def __init__(self, config: ScenarioConfig, scheme: SchemeKind, world: Optional[WorldState] = None,
                 collect_kappa: bool = False):
        """
        Args:
            config (ScenarioConfig): validated configuration (config.seed drives every stream)
            scheme (SchemeKind): communication scheme
            world (WorldState, optional): prebuilt world; generated from the seed otherwise
            collect_kappa (bool): keep raw kappa samples from every epoch
        """
        self.config = config.validate()
        self.scheme = scheme
        streams = trial_streams(config.seed)
        self.world = copy.deepcopy(world) if world is not None else generate_scenario(config, streams["scenario"])
        if abs(self.world.sim_dt - config.sim_dt) > 1e-12:
            raise ConfigError("World and configuration disagree on sim_dt")
        self.perception_rng = streams["perception"]

        n, m = self.world.n_agents, self.world.m_subjects
        bandwidth = sample_pairwise_bandwidth(n, config.bandwidth_min, config.bandwidth_max, streams["bandwidth"])
        self.comms = CommsInfrastructure(config, bandwidth, scheme, collect_kappa=collect_kappa)
        self.model = ObservationModel(config.alpha, config.sigma_floor, config.perceived_sigma_scale)
        self.beliefs = [BeliefTable.initial(i, m, config.field_size, config.subject_v_max) for i in range(n)]
        self.offsets = sample_offsets(config.collision_samples, streams["sampling"])
        self.gains = PDGains(config.kp, config.kd)

        self.uploads = []
        self.contacts = set()
        self.agent_subject_collisions = 0
        self.agent_agent_collisions = 0
        self.finish_time: Optional[float] = None
        self.first_threat_time: List[Optional[float]] = [None] * n

        for agent in self.world.agents:
            if agent.reference is None:
                agent.reference = ReferenceState()
        self._update_finished()

    @property
    def done(self) -> bool:
        return self.finish_time is not None or self.world.time >= self.config.max_sim_time - 1e-9

    def _update_finished(self):
        tolerance = self.config.goal_tolerance
        for agent in self.world.agents:
            if not agent.finished and np.linalg.norm(agent.state.position - agent.goal) <= tolerance:
                agent.finished = True
        if self.finish_time is None and all(a.finished for a in self.world.agents):
            self.finish_time = self.world.time

    def _perceive(self, now: float):
        q, q_v = self.config.process_noise_pos, self.config.process_noise_vel
        subject_states = [s.state for s in self.world.subjects]
        for i, agent in enumerate(self.world.agents):
            table = self.beliefs[i]
            table.predict_all(now, q, q_v)
            for obs in observe_visible(self.model, i, agent.state, subject_states,
                                       self.world.wall_array, self.perception_rng, now):
                h = obs.subject
                table.means[h], table.variances[h] = fuse_arrays(table.means[h], table.variances[h],
                                                                 obs.mean, obs.variance)
                self.uploads.append(obs)

    def _count_contacts(self):
        radius = self.config.collision_radius
        agents = [a.state.position for a in self.world.agents]
        subjects = [s.state.position for s in self.world.subjects]
        touching = set()
        for i, p in enumerate(agents):
            for k, s in enumerate(subjects):
                if np.linalg.norm(p - s) < radius:
                    touching.add(("subject", i, k))
            for j in range(i + 1, len(agents)):
                if np.linalg.norm(p - agents[j]) < radius:
                    touching.add(("agent", i, j))
        for kind, _, _ in touching - self.contacts:
            if kind == "subject":
                self.agent_subject_collisions += 1
            else:
                self.agent_agent_collisions += 1
        self.contacts = touching

    def step(self):
        """Advance the trial by one tick"""
        config = self.config
        world = self.world
        now = world.time
        dt = config.sim_dt

        self._perceive(now)

        if world.tick % config.ticks_per_epoch == 0:
            paths = [a.path for a in world.agents]
            progress = [a.progress for a in world.agents]
            self.comms.run_epoch(now, self.beliefs, self.uploads, paths, progress)
            self.uploads = []

        agent_accels = []
        for i, agent in enumerate(world.agents):
            path = agent.path
            agent.progress = path.project(agent.state.position, hint=agent.progress)
            if agent.finished:
                assessment = CollisionAssessment()
            else:
                assessment = assess_collision(
                    path, agent.progress, self.beliefs[i].beliefs(), config.horizon,
                    config.collision_radius, dt, self.offsets, config.collision_sample_fraction,
                )
                if assessment.imminent and self.first_threat_time[i] is None:
                    self.first_threat_time[i] = now
            agent.reference = advance_reference(path, agent.reference, agent.progress, assessment, dt,
                                                config.a_max, config.stop_ramp, config.stop_buffer,
                                                config.max_lead)
            agent_accels.append(agent_control(agent.state, path, agent.reference, self.gains, config.a_max))

        subject_accels = []
        for subject in world.subjects:
            subject_accels.append(subject_control(subject.state, subject.trajectory, subject.reference_progress,
                                                  subject.direction, self.gains, config.a_max))
            subject.reference_progress, subject.direction = advance_subject_reference(
                subject.trajectory, subject.reference_progress, subject.direction, dt)

        self.world = advance_world(world, agent_accels, subject_accels, dt)
        self._count_contacts()
        self._update_finished()

    def run(self) -> "TrialSimulation":
        while not self.done:
            self.step()
        return self

    def result(self) -> TrialResult:
        config = self.config
        logs = self.comms.epoch_logs
        used = [log.bandwidth_used for log in logs]
        times = [log.optimizer_time for log in logs]
        return TrialResult(
            scheme=self.scheme.name,
            config_digest=config_digest(config),
            seed=config.seed,
            makespan=self.finish_time if self.finish_time is not None else config.max_sim_time,
            timed_out=self.finish_time is None,
            agents_finished=sum(1 for a in self.world.agents if a.finished),
            agent_subject_collisions=self.agent_subject_collisions,
            agent_agent_collisions=self.agent_agent_collisions,
            epochs=len(logs),
            mean_bandwidth_used=float(np.mean(used)) if used else 0.0,
            max_bandwidth_used=int(max(used)) if used else 0,
            bandwidth_limit=config.bandwidth_limit,
            total_deliveries=int(sum(log.deliveries for log in logs)),
            delivered_utility=math.fsum(log.delivered_utility for log in logs),
            mean_optimizer_time=float(np.mean(times)) if times else 0.0,
            max_optimizer_time=float(max(times)) if times else 0.0,
            epoch_logs=list(logs),
        )


def run_trial(config: ScenarioConfig, scheme: SchemeKind, world: Optional[WorldState] = None) -> TrialResult:
    """
    Run one trial to completion or timeout

    Args:
        config (ScenarioConfig): configuration, including the seed
        scheme (SchemeKind): communication scheme
        world (WorldState, optional): constructed scenario to use instead of a generated one

    Returns:
        TrialResult

    Raises:
        InfeasibleScenarioError: if the scenario cannot be generated
    """
    simulation = TrialSimulation(config, scheme, world=world).run()
    result = simulation.result()
    if result.timed_out:
        logger.warning(f"Trial seed={config.seed} scheme={scheme.name} timed out at {config.max_sim_time} s "
                       f"({result.agents_finished}/{simulation.world.n_agents} agents home)")
    return result


def _run_job(job: Tuple[ScenarioConfig, str, str, Any, int, int]) -> TrialResult:
    config, scheme_name, parameter, value, value_index, trial_index = job
    try:
        result = run_trial(config, SchemeKind[scheme_name])
    except Exception as e:
        logger.error(f"Trial failed (seed={config.seed}, scheme={scheme_name}, {parameter}={value}): {str(e)}")
        result = TrialResult(scheme=scheme_name, config_digest=config_digest(config), seed=config.seed,
                             bandwidth_limit=config.bandwidth_limit, status="failed",
                             error=f"{type(e).__name__}: {str(e)}")
    result.parameter = parameter
    result.value = value
    result.value_index = value_index
    result.trial_index = trial_index
    return result


def sweep_jobs(spec: SweepSpec) -> List[Tuple[ScenarioConfig, str, str, Any, int, int]]:
    """Every (config, scheme, ...) job of a sweep in file order"""
    jobs = []
    for value_index, value in enumerate(spec.values):
        point = apply_sweep_value(spec.base_config, spec.parameter, value)
        for scheme in spec.schemes:
            for trial_index in range(spec.trials_per_value):
                seed = derive_trial_seed(spec.base_seed, value_index, trial_index)
                jobs.append((point.with_updates(seed=seed), scheme.name, spec.parameter,
                             value, value_index, trial_index))
    return jobs


def run_sweep(spec: SweepSpec, workers: int = 1) -> List[TrialResult]:
    """
    Run every trial of a sweep

    Args:
        spec (SweepSpec): the sweep
        workers (int): worker processes; 1 runs in-process

    Returns:
        list: TrialResult rows ordered by (value index, scheme, trial index)
    """
    jobs = sweep_jobs(spec)
    logger.info(f"Sweep '{spec.name}': {len(spec.values)} values x {len(spec.schemes)} schemes x "
                f"{spec.trials_per_value} trials = {len(jobs)} trials on {workers} worker(s)")

    if workers <= 1:
        results = []
        for done, job in enumerate(jobs, 1):
            results.append(_run_job(job))
            if done % 10 == 0 or done == len(jobs):
                logger.info(f"Sweep '{spec.name}': {done}/{len(jobs)} trials done")
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))

    failed = [r for r in results if not r.ok]
    if failed:
        logger.warning(f"Sweep '{spec.name}': {len(failed)} trial(s) failed and are excluded from aggregates")
    return results


def _stderr(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))


def _groups(results: Sequence[TrialResult]):
    keyed = sorted(results, key=lambda r: (r.value_index, r.scheme, r.trial_index))
    return itertools.groupby(keyed, key=lambda r: (r.value_index, r.scheme))


def aggregate(results: Sequence[TrialResult]) -> List[Dict[str, Any]]:
    """
    Per (value, scheme) summary computed from the deterministic trial columns only

    Makespans of timed-out trials are counted at the time limit; the
    completion rate reports how many trials finished.
    """
    rows = []
    for (value_index, scheme), members in _groups(results):
        members = list(members)
        ok = [r for r in members if r.ok]
        for r in ok:
            if r.max_bandwidth_used > r.bandwidth_limit:
                raise AssertionError(f"Trial seed={r.seed} {scheme} exceeded its bandwidth limit")
        makespans = [r.makespan for r in ok]
        completed = [r for r in ok if not r.timed_out]
        rows.append({
            "parameter": members[0].parameter,
            "value": members[0].value,
            "value_index": value_index,
            "scheme": scheme,
            "trials": len(ok),
            "failed": len(members) - len(ok),
            "completion_rate": len(completed) / len(ok) if ok else 0.0,
            "mean_makespan": float(np.mean(makespans)) if ok else float("nan"),
            "stderr_makespan": _stderr(makespans),
            "mean_completed_makespan": float(np.mean([r.makespan for r in completed])) if completed else float("nan"),
            "mean_agent_subject_collisions": float(np.mean([r.agent_subject_collisions for r in ok])) if ok else 0.0,
            "mean_agent_agent_collisions": float(np.mean([r.agent_agent_collisions for r in ok])) if ok else 0.0,
            "mean_bandwidth_used": float(np.mean([r.mean_bandwidth_used for r in ok])) if ok else 0.0,
            "mean_deliveries": float(np.mean([r.total_deliveries for r in ok])) if ok else 0.0,
        })
    return rows


def runtime_aggregate(results: Sequence[TrialResult]) -> List[Dict[str, Any]]:
    """Per (value, scheme) wall-clock optimizer statistics"""
    rows = []
    for (value_index, scheme), members in _groups(results):
        ok = [r for r in members if r.ok]
        times = [r.mean_optimizer_time for r in ok]
        rows.append({
            "parameter": ok[0].parameter if ok else "",
            "value": ok[0].value if ok else "",
            "value_index": value_index,
            "scheme": scheme,
            "trials": len(ok),
            "mean_optimizer_time": float(np.mean(times)) if times else float("nan"),
            "stderr_optimizer_time": _stderr(times),
            "max_optimizer_time": float(max(r.max_optimizer_time for r in ok)) if ok else float("nan"),
        })
    return rows


def paired_improvement(results: Sequence[TrialResult], scheme: str, baseline: str) -> Dict[int, float]:
    """
    Mean paired relative makespan reduction of `scheme` over `baseline` per value index

    Only trial indices where both schemes succeeded are paired.
    """
    by_key = {(r.value_index, r.scheme, r.trial_index): r for r in results if r.ok}
    gains: Dict[int, List[float]] = {}
    for (value_index, name, trial_index), r in by_key.items():
        if name != baseline:
            continue
        other = by_key.get((value_index, scheme, trial_index))
        if other is None or r.makespan <= 0:
            continue
        gains.setdefault(value_index, []).append((r.makespan - other.makespan) / r.makespan)
    return {k: float(np.mean(v)) for k, v in sorted(gains.items())}


def calibrate_kappa_scale(config: ScenarioConfig, trials: int = 20, base_seed: int = 0,
                          percentile: float = 95.0) -> float:
    """
    Empirical normaliser for kappa: the given percentile of raw kappa over seeded IKNAP trials

    Returns:
        float: the percentile, or config.kappa_scale if no candidate was ever built
    """
    samples: List[float] = []
    for trial_index in range(trials):
        seed = derive_trial_seed(base_seed, 0, trial_index)
        simulation = TrialSimulation(config.with_updates(seed=seed), SchemeKind.IKNAP, collect_kappa=True).run()
        samples.extend(simulation.comms.kappa_samples)
        logger.info(f"Calibration trial {trial_index + 1}/{trials}: {len(samples)} kappa samples so far")
    positive = [k for k in samples if k > 0]
    if not positive:
        logger.warning("No kappa samples collected; keeping the configured kappa_scale")
        return config.kappa_scale
    return float(np.percentile(positive, percentile))


if __name__ == "__main__":
    config = ScenarioConfig(seed=3, n_agents=3, m_subjects=3, n_walls=5, max_sim_time=60.0)
    for scheme in SchemeKind:
        result = run_trial(config, scheme)
        print(f"{scheme.name:20s} makespan {result.makespan:6.2f} s  deliveries {result.total_deliveries:4d}  "
              f"collisions {result.agent_subject_collisions}")
