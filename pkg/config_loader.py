#!/usr/bin/env python3
"""
Scenario Configuration Loader for the iKnap Simulator

Loads a ScenarioConfig from defaults, a key/value scenario file, environment
variables and explicit overrides (in that order of precedence). Scenario
files use the same dotenv syntax as a .env file, with keys named exactly like
the ScenarioConfig fields:

    n_agents=5
    m_subjects=5
    pairwise_bandwidth_range=1,10
"""

import os
import json
import hashlib
import logging
import dataclasses
from dataclasses import dataclass, fields
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values, load_dotenv

# Set up logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('config_loader')

ENV_PREFIX = "IKNAP_"


class ConfigError(ValueError):
    """Raised for unknown keys, unparsable values or violated invariants"""


@dataclass(frozen=True)
class ScenarioConfig:
    """All knobs of one simulated trial. Units are SI (m, s, m/s, m/s^2)."""

    # scenario
    n_agents: int = 5
    m_subjects: int = 5
    n_walls: int = 10
    field_size: float = 40.0
    wall_length_min: float = 4.0
    wall_length_max: float = 10.0
    min_goal_distance: float = 10.0
    placement_retries: int = 1000
    seed: int = 0

    # perception
    alpha: float = 0.01
    sigma_floor: float = 1e-3
    perceived_sigma_scale: float = 1.0
    process_noise_pos: float = 0.05
    process_noise_vel: float = 0.05

    # communication
    comm_period: float = 1.0
    bandwidth_limit: int = 25
    bandwidth_min: int = 1
    bandwidth_max: int = 10
    bandwidth_quantization: int = 1
    theta_epsilon: float = 1e-9

    # utility
    horizon: float = 5.0
    p1: float = 1.0
    p2: float = 1.0
    kappa_scale: float = 35.0

    # simulation
    sim_dt: float = 0.05
    max_sim_time: float = 120.0
    goal_tolerance: float = 0.3
    collision_radius: float = 0.5

    # navigation
    agent_target_speed: float = 1.5
    agent_v_max: float = 2.0
    subject_speed_min: float = 0.5
    subject_speed_max: float = 2.0
    subject_v_max: float = 2.5
    a_max: float = 3.0
    kp: float = 4.0
    kd: float = 4.0
    clearance_factor: float = 1.5
    collision_samples: int = 32
    collision_sample_fraction: float = 0.0
    stop_ramp: float = 1.0
    stop_buffer: float = 0.05
    max_lead: float = 1.0
    spline_points_min: int = 2
    spline_points_max: int = 4

    @property
    def clearance(self) -> float:
        return self.clearance_factor * self.collision_radius

    @property
    def pairwise_bandwidth_range(self):
        return (self.bandwidth_min, self.bandwidth_max)

    @property
    def ticks_per_epoch(self) -> int:
        return int(round(self.comm_period / self.sim_dt))

    def validate(self) -> "ScenarioConfig":
        """
        Check every invariant of the configuration

        Returns:
            ScenarioConfig: self, so calls can be chained

        Raises:
            ConfigError: naming the first violated constraint
        """
        problems = []
        for name in ("n_agents", "m_subjects", "n_walls", "bandwidth_limit"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0")
        if self.sim_dt <= 0:
            problems.append("sim_dt must be > 0")
        elif self.comm_period < self.sim_dt:
            problems.append("comm_period must be >= sim_dt")
        elif abs(self.ticks_per_epoch * self.sim_dt - self.comm_period) > 1e-9:
            problems.append("comm_period must be an integer multiple of sim_dt")
        if self.bandwidth_min < 1 or self.bandwidth_max < self.bandwidth_min:
            problems.append("pairwise bandwidth range needs 1 <= min <= max")
        if self.bandwidth_quantization < 1:
            problems.append("bandwidth_quantization must be >= 1")
        if self.field_size <= 0:
            problems.append("field_size must be > 0")
        if not 0 < self.wall_length_min <= self.wall_length_max:
            problems.append("wall lengths need 0 < min <= max")
        if self.alpha < 0 or self.sigma_floor <= 0 or self.perceived_sigma_scale <= 0:
            problems.append("alpha >= 0, sigma_floor > 0 and perceived_sigma_scale > 0 required")
        if self.process_noise_pos < 0 or self.process_noise_vel < 0:
            problems.append("process noise must be >= 0")
        if self.p1 < 0 or self.p2 < 0 or self.horizon <= 0 or self.kappa_scale <= 0:
            problems.append("p1, p2 >= 0, horizon > 0 and kappa_scale > 0 required")
        if self.max_sim_time <= 0 or self.goal_tolerance <= 0 or self.collision_radius <= 0:
            problems.append("max_sim_time, goal_tolerance and collision_radius must be > 0")
        if not 0 < self.subject_speed_min <= self.subject_speed_max <= self.subject_v_max:
            problems.append("subject speeds need 0 < min <= max <= subject_v_max")
        if not 0 <= self.agent_target_speed <= self.agent_v_max:
            problems.append("agent_target_speed must lie in [0, agent_v_max]")
        if self.a_max <= 0 or self.kp <= 0 or self.kd <= 0:
            problems.append("a_max, kp and kd must be > 0")
        if self.collision_samples < 1 or not 0 <= self.collision_sample_fraction <= 1:
            problems.append("collision_samples >= 1 and 0 <= collision_sample_fraction <= 1 required")
        if not 0 <= self.spline_points_min <= self.spline_points_max:
            problems.append("spline point counts need 0 <= min <= max")
        if self.stop_ramp <= 0 or self.stop_buffer < 0 or self.max_lead <= 0:
            problems.append("stop_ramp > 0, stop_buffer >= 0 and max_lead > 0 required")

        if problems:
            raise ConfigError("Invalid scenario configuration: " + "; ".join(problems))
        return self

    def with_updates(self, **changes) -> "ScenarioConfig":
        """Return a validated copy with the given fields replaced (values are coerced)"""
        return dataclasses.replace(self, **_normalise(changes, "updates")).validate()

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def field_names():
    return {f.name for f in fields(ScenarioConfig)}


def _coerce(name: str, raw: Any) -> Any:
    field_type = {f.name: f.type for f in fields(ScenarioConfig)}[name]
    try:
        if field_type in (int, "int"):
            number = float(raw)
            if not number.is_integer():
                raise ValueError(f"{raw} is not an integer")
            return int(number)
        return float(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Bad value for '{name}': {raw!r} ({e})")


def _normalise(values: Mapping[str, Any], source: str) -> Dict[str, Any]:
    """Map raw key/value pairs onto typed ScenarioConfig fields"""
    known = field_names()
    out: Dict[str, Any] = {}
    for key, raw in values.items():
        if raw is None or raw == "":
            continue
        key = key.strip().lower()
        if key == "pairwise_bandwidth_range":
            if isinstance(raw, str):
                parts = [p for p in raw.replace("[", "").replace("]", "").split(",") if p.strip()]
            else:
                parts = list(raw)
            if len(parts) != 2:
                raise ConfigError(f"pairwise_bandwidth_range in {source} needs two values, got {raw!r}")
            out["bandwidth_min"] = _coerce("bandwidth_min", parts[0])
            out["bandwidth_max"] = _coerce("bandwidth_max", parts[1])
            continue
        if key not in known:
            raise ConfigError(f"Unknown configuration key '{key}' in {source}")
        out[key] = _coerce(key, raw)
    return out


def _env_overrides() -> Dict[str, Any]:
    """Collect IKNAP_<FIELD> variables (a .env file in the cwd is honoured)"""
    load_dotenv()
    wanted = field_names() | {"pairwise_bandwidth_range"}
    found = {}
    for name in wanted:
        value = os.getenv(ENV_PREFIX + name.upper())
        if value is not None:
            found[name] = value
    return _normalise(found, "environment")


def load_config(
    path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    use_env: bool = True
) -> ScenarioConfig:
    """
    Build a validated ScenarioConfig

    Args:
        path (str, optional): dotenv-style scenario file
        overrides (dict, optional): highest-precedence values (e.g. CLI flags)
        use_env (bool): whether IKNAP_<FIELD> environment variables apply

    Returns:
        ScenarioConfig: the merged, validated configuration
    """
    merged: Dict[str, Any] = {}

    if path:
        if not os.path.exists(path):
            raise ConfigError(f"Scenario file not found: {path}")
        merged.update(_normalise(dotenv_values(path), path))
        logger.info(f"Loaded {len(merged)} scenario keys from {path}")

    if use_env:
        env_values = _env_overrides()
        if env_values:
            logger.info(f"Applying environment overrides: {', '.join(sorted(env_values))}")
        merged.update(env_values)

    if overrides:
        merged.update(_normalise(overrides, "overrides"))

    return ScenarioConfig(**merged).validate()


def config_digest(config: ScenarioConfig) -> str:
    """Short stable fingerprint of a configuration"""
    canonical = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


if __name__ == "__main__":
    try:
        config = load_config("scenario.env" if os.path.exists("scenario.env") else None)
        print(json.dumps(config.to_dict(), indent=2))
        print(f"Digest: {config_digest(config)}")
    except ConfigError as e:
        print(f"Error: {str(e)}")
