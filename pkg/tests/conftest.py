"""
Shared fixtures for the iKnap simulator tests.

The modules live flat at the repository root, so the root is put on
sys.path before anything is imported.
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from config_loader import ScenarioConfig
from navigation import ReferenceState, SplineTrajectory, plan_path
from world_model import AgentRecord, BodyState, SubjectRecord, Wall, WorldState


def build_world(config, agents, subjects=(), walls=()):
    """
    Hand-made WorldState

    Args:
        config (ScenarioConfig): supplies sim_dt, field size, speeds and clearance
        agents: (start, goal) pairs
        subjects: (control_points, speed) pairs; the subject starts at the first point
        walls: ((ax, ay), (bx, by)) pairs
    """
    wall_list = [Wall(tuple(map(float, a)), tuple(map(float, b))) for a, b in walls]
    agent_records = []
    for start, goal in agents:
        start = np.asarray(start, dtype=float)
        goal = np.asarray(goal, dtype=float)
        path = plan_path(start, goal, wall_list, config.clearance, target_speed=config.agent_target_speed)
        agent_records.append(AgentRecord(BodyState(start.copy(), np.zeros(2)), start, goal, path,
                                         config.agent_v_max, reference=ReferenceState()))
    subject_records = []
    for points, speed in subjects:
        trajectory = SplineTrajectory(np.asarray(points, dtype=float), speed)
        subject_records.append(SubjectRecord(BodyState(trajectory.control_points[0].copy(), np.zeros(2)),
                                             trajectory, config.subject_v_max))
    return WorldState(tick=0, sim_dt=config.sim_dt, agents=agent_records, subjects=subject_records,
                      walls=wall_list, field_size=config.field_size)


@pytest.fixture
def default_config():
    return ScenarioConfig()


@pytest.fixture
def small_config():
    return ScenarioConfig(n_agents=2, m_subjects=2, n_walls=2, max_sim_time=20.0)


@pytest.fixture
def world_builder():
    return build_world


@pytest.fixture(autouse=True)
def _no_scenario_env(monkeypatch):
    """Keep IKNAP_* variables of the calling shell out of every test"""
    for name in list(os.environ):
        if name.startswith("IKNAP_"):
            monkeypatch.delenv(name, raising=False)
