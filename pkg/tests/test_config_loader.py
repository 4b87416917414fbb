"""Scenario configuration: defaults, validation, file/env/override precedence."""

import pytest

from config_loader import ConfigError, ScenarioConfig, config_digest, load_config


class TestScenarioConfig:
    def test_defaults_are_valid(self):
        config = ScenarioConfig().validate()
        assert config.n_agents == 5
        assert config.m_subjects == 5
        assert config.n_walls == 10
        assert config.bandwidth_limit == 25
        assert config.pairwise_bandwidth_range == (1, 10)
        assert config.clearance == pytest.approx(0.75)
        assert config.ticks_per_epoch == 20

    def test_comm_period_must_be_a_multiple_of_sim_dt(self):
        with pytest.raises(ConfigError, match="integer multiple"):
            ScenarioConfig(comm_period=0.07).validate()

    def test_comm_period_below_sim_dt_rejected(self):
        with pytest.raises(ConfigError, match="comm_period"):
            ScenarioConfig(comm_period=0.01).validate()

    def test_negative_budget_rejected(self):
        with pytest.raises(ConfigError, match="bandwidth_limit"):
            ScenarioConfig().with_updates(bandwidth_limit=-1)

    def test_inverted_bandwidth_range_rejected(self):
        with pytest.raises(ConfigError, match="bandwidth range"):
            ScenarioConfig(bandwidth_min=5, bandwidth_max=2).validate()

    @pytest.mark.parametrize("fraction, ok", [(0.0, True), (0.5, True), (1.0, True), (-0.1, False), (1.5, False)])
    def test_collision_sample_fraction_range(self, fraction, ok):
        config = ScenarioConfig(collision_sample_fraction=fraction)
        if ok:
            assert config.validate() is config
        else:
            with pytest.raises(ConfigError, match="collision_sample_fraction"):
                config.validate()

    def test_with_updates_coerces_and_expands_range(self):
        config = ScenarioConfig().with_updates(n_agents="3", alpha="0.1", pairwise_bandwidth_range="2,6")
        assert config.n_agents == 3 and isinstance(config.n_agents, int)
        assert config.alpha == pytest.approx(0.1)
        assert config.pairwise_bandwidth_range == (2, 6)

    def test_with_updates_leaves_original_untouched(self):
        base = ScenarioConfig()
        base.with_updates(seed=9)
        assert base.seed == 0


class TestLoadConfig:
    @pytest.fixture
    def scenario_file(self, tmp_path):
        path = tmp_path / "scenario.env"
        path.write_text("# test scenario\nn_agents=3\nalpha=0.1\npairwise_bandwidth_range=2,6\n")
        return str(path)

    def test_defaults_without_file(self):
        assert load_config(use_env=False) == ScenarioConfig()

    def test_file_values(self, scenario_file):
        config = load_config(scenario_file, use_env=False)
        assert config.n_agents == 3
        assert config.alpha == pytest.approx(0.1)
        assert (config.bandwidth_min, config.bandwidth_max) == (2, 6)
        assert config.m_subjects == 5

    def test_environment_overrides_file(self, scenario_file, monkeypatch):
        monkeypatch.setenv("IKNAP_N_AGENTS", "4")
        assert load_config(scenario_file).n_agents == 4

    def test_explicit_overrides_win(self, scenario_file, monkeypatch):
        monkeypatch.setenv("IKNAP_N_AGENTS", "4")
        assert load_config(scenario_file, overrides={"n_agents": 6}).n_agents == 6

    def test_environment_ignored_when_disabled(self, scenario_file, monkeypatch):
        monkeypatch.setenv("IKNAP_N_AGENTS", "4")
        assert load_config(scenario_file, use_env=False).n_agents == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(str(tmp_path / "absent.env"), use_env=False)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.env"
        path.write_text("n_robots=3\n")
        with pytest.raises(ConfigError, match="Unknown configuration key 'n_robots'"):
            load_config(str(path), use_env=False)

    @pytest.mark.parametrize("line", ["n_agents=5.5", "n_agents=many", "alpha=high"])
    def test_unparsable_values(self, tmp_path, line):
        path = tmp_path / "bad.env"
        path.write_text(line + "\n")
        with pytest.raises(ConfigError, match="Bad value"):
            load_config(str(path), use_env=False)

    def test_bandwidth_range_needs_two_values(self):
        with pytest.raises(ConfigError, match="two values"):
            load_config(overrides={"pairwise_bandwidth_range": "3"}, use_env=False)

    def test_invalid_result_is_rejected(self):
        with pytest.raises(ConfigError, match="sim_dt"):
            load_config(overrides={"sim_dt": 0}, use_env=False)


class TestConfigDigest:
    def test_stable_and_short(self):
        digest = config_digest(ScenarioConfig())
        assert digest == config_digest(ScenarioConfig())
        assert len(digest) == 12
        int(digest, 16)

    def test_changes_with_any_field(self):
        assert config_digest(ScenarioConfig(seed=1)) != config_digest(ScenarioConfig(seed=2))
        assert config_digest(ScenarioConfig(alpha=0.01)) != config_digest(ScenarioConfig(alpha=0.02))
