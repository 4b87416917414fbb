"""Oracle suites at reduced sizes; full-size runs go through `run_experiments.py oracle`."""

import os

import numpy as np
import pytest

from config_loader import ScenarioConfig
from oracle_suite import (
    SUITES, delivered_utility_dominance, determinism, directional_reproduction, fusion_precision, knapsack_optimality,
    kl_quadrature, random_candidates, run_oracles, runtime_ratio, runtime_scaling, safety_invariant,
)


class TestRandomCandidates:
    def test_valid_and_distinct(self):
        items = random_candidates(np.random.default_rng(42), 200)
        assert len({(c.sender, c.receiver, c.subject) for c in items}) == 200
        assert all(c.sender != c.receiver and 1 <= c.bandwidth <= 10 for c in items)


class TestFastSuites:
    def test_knapsack_optimality(self):
        report = knapsack_optimality(100)
        assert report["passed"] and report["mismatches"] == 0

    def test_fusion_precision(self):
        report = fusion_precision(500)
        assert report["passed"]
        assert report["worst_relative_error"] <= 1e-12

    def test_kl_quadrature(self):
        report = kl_quadrature(10)
        assert report["passed"]

    def test_safety_invariant(self):
        report = safety_invariant(5)
        assert report["passed"], report
        assert report["closest_approach"] >= ScenarioConfig().collision_radius


@pytest.mark.slow
class TestSlowSuites:
    def test_runtime_scaling(self):
        report = runtime_scaling((5, 10), repeats=3)
        assert report["passed"], report

    def test_determinism(self):
        config = ScenarioConfig(n_agents=2, m_subjects=2, n_walls=2, max_sim_time=15.0)
        assert determinism(1, config)["passed"]

    def test_dominance(self):
        config = ScenarioConfig(n_agents=3, m_subjects=3, n_walls=3, max_sim_time=20.0)
        report = delivered_utility_dominance(50, config)
        assert report["passed"] and report["epochs"] == 50

    def test_runtime_ratio(self):
        report = runtime_ratio(epochs=3)
        assert report["passed"], report
        assert report["epochs"] == 3
        assert report["mean_candidates"] > 100

    def test_directional_reproduction(self):
        report = directional_reproduction(100, workers=min(8, os.cpu_count() or 1))
        assert report["passed"], report
        assert report["paired_improvement_over_no_comm"] >= 0.05
        makespan = report["mean_makespan"]
        assert makespan["IKNAP"] <= makespan["BROADCAST_BASELINE"]
        assert makespan["IKNAP"] < makespan["NO_COMM"]


class TestRunOracles:
    def test_unknown_suite(self):
        with pytest.raises(ValueError, match="Unknown oracle suite"):
            run_oracles(["fusion", "telepathy"])

    def test_selected_suite(self):
        report = run_oracles(["fusion"], fast=True)
        assert report["passed"]
        assert [s["name"] for s in report["suites"]] == ["fusion_precision"]
        assert report["suites"][0]["wall_seconds"] >= 0.0

    def test_crashing_suite_is_reported(self, monkeypatch):
        def explode(fast):
            raise RuntimeError("boom")
        monkeypatch.setitem(SUITES, "fusion", explode)
        report = run_oracles(["fusion"], fast=True)
        assert not report["passed"]
        assert report["suites"][0]["error"] == "RuntimeError: boom"
