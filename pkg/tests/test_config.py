import pydantic
import pytest

import rafalab.config as config
from rafalab.errors import ConfigurationError


def test_packaged_defaults_load(monkeypatch):
    monkeypatch.delenv("RAFALAB_OUT_DIR", raising=False)
    experiment = config.load_experiment()
    assert experiment.agent.variant == "rafa-ps"
    assert experiment.agent.switch.kind == "entropy-log2"
    assert experiment.harness.t_grid == [500, 2000, 8000]
    assert experiment.harness.seeds == list(range(20))
    assert experiment.arms == []


def test_file_overrides_defaults(small_config):
    experiment = config.load_experiment(str(small_config))
    assert experiment.environment.n_states == 3
    assert experiment.agent.T == 50
    assert experiment.agent.epsilon == 0.01


def test_unknown_key_is_rejected(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[agent]\nhorizon = 10\n")
    with pytest.raises(ConfigurationError):
        config.load_experiment(str(path))


def test_missing_file_names_the_path(tmp_path):
    path = str(tmp_path / "absent.toml")
    with pytest.raises(ConfigurationError, match="absent.toml"):
        config.load_experiment(path)


def test_malformed_toml(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[agent\nT = 1\n")
    with pytest.raises(ConfigurationError):
        config.load_experiment(str(path))


def test_out_dir_from_environment(small_config, monkeypatch, tmp_path):
    monkeypatch.setenv("RAFALAB_OUT_DIR", str(tmp_path / "elsewhere"))
    experiment = config.load_experiment(str(small_config))
    assert experiment.harness.out_dir == str(tmp_path / "elsewhere")


def test_schema_version_mismatch(tmp_path):
    path = tmp_path / "future.toml"
    path.write_text("schema_version = 2\n")
    with pytest.raises(ConfigurationError, match="schema_version"):
        config.load_experiment(str(path))


def test_t_grid_is_sorted_and_deduplicated():
    assert config.HarnessConfig(t_grid=[800, 200, 800]).t_grid == [200, 800]
    with pytest.raises(pydantic.ValidationError):
        config.HarnessConfig(t_grid=[])
    with pytest.raises(pydantic.ValidationError):
        config.HarnessConfig(t_grid=[0, 100])


def test_reward_interval_must_be_ordered():
    with pytest.raises(pydantic.ValidationError):
        config.EnvironmentConfig(reward_low=0.8, reward_high=0.2)


def test_sections_are_frozen():
    agent = config.AgentConfig()
    with pytest.raises(pydantic.ValidationError):
        agent.T = 5


def test_without_arms_the_base_agent_is_the_only_arm():
    experiment = config.ExperimentConfig(agent=config.AgentConfig(variant="rafa-bma"))
    ((name, env, agent),) = experiment.arm_settings()
    assert name == "rafa-bma"
    assert env == experiment.environment
    assert agent == experiment.agent


def test_arms_merge_nested_overrides(tmp_path):
    path = tmp_path / "arms.toml"
    path.write_text(
        "\n".join(
            [
                "[agent]",
                "epsilon = 0.05",
                "[[arms]]",
                'name = "greedy"',
                "agent = { myopic = true }",
                "[[arms]]",
                'name = "mcts"',
                'agent = { planner = { kind = "mcts", expansions = 20 } }',
                "environment = { n_states = 4 }",
            ]
        )
    )
    arms = config.load_experiment(str(path)).arm_settings()
    assert [name for name, _, _ in arms] == ["greedy", "mcts"]
    (_, _, greedy), (_, mcts_env, mcts_agent) = arms
    assert greedy.myopic and greedy.epsilon == 0.05
    assert mcts_agent.planner.kind == "mcts"
    assert mcts_agent.planner.expansions == 20
    assert mcts_agent.planner.depth == 2
    assert mcts_env.n_states == 4


def test_arm_with_unknown_agent_key():
    experiment = config.ExperimentConfig(
        arms=[config.ArmConfig(name="x", agent={"temperature": 1.0})]
    )
    with pytest.raises(pydantic.ValidationError):
        experiment.arm_settings()


@pytest.mark.parametrize("T", [0, -5])
def test_agent_needs_at_least_one_step(T):
    with pytest.raises(pydantic.ValidationError):
        config.AgentConfig(T=T)


def test_output_path_below_a_file_is_not_writable(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    with pytest.raises(ConfigurationError, match="not a directory"):
        config.check_writable(str(blocker / "runs"))
    config.check_writable(str(tmp_path / "fresh" / "runs"))
