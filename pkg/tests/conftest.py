import numpy as np
import pytest

import rafalab.config as config
import rafalab.mdp.setup as setup
import rafalab.planners.data as planner_data
import rafalab.util as util


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def small_env():
    gen_config = config.EnvironmentConfig(n_states=3, n_actions=2)
    return setup.generate_environment(gen_config, util.stream(0, "environment"))


@pytest.fixture
def chain_env():
    gen_config = config.EnvironmentConfig(
        mode="delayed-chain", n_states=4, n_actions=2, gamma=0.9
    )
    return setup.generate_environment(gen_config, util.stream(0, "environment"))


@pytest.fixture
def small_agent():
    return config.AgentConfig(T=60, seed=3)


def make_random_model(rng, n_states=4, n_actions=3, gamma=0.9):
    return planner_data.PlanningModel(
        kernel=rng.dirichlet(np.ones(n_states), size=(n_states, n_actions)),
        reward=rng.uniform(size=(n_states, n_actions)),
        gamma=gamma,
        value_bound=1.0 / (1.0 - gamma),
    )


def make_deterministic_model(rng, n_states=5, n_actions=3, gamma=0.9):
    successors = rng.integers(n_states, size=(n_states, n_actions))
    kernel = np.zeros((n_states, n_actions, n_states))
    rows = np.indices((n_states, n_actions))
    kernel[rows[0], rows[1], successors] = 1.0
    return planner_data.PlanningModel(
        kernel=kernel,
        reward=rng.uniform(size=(n_states, n_actions)),
        gamma=gamma,
        value_bound=1.0 / (1.0 - gamma),
    )


@pytest.fixture
def random_model():
    return make_random_model


@pytest.fixture
def deterministic_model():
    return make_deterministic_model


@pytest.fixture(params=["zero", "noise"])
def weak_critic(request):
    """A critic far from V*, so only search depth finds the best action."""

    def critic(model, rng):
        if request.param == "zero":
            return np.zeros(model.n_states)
        return rng.uniform(0.0, model.value_bound, size=model.n_states)

    return critic


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(
        "\n".join(
            [
                "[logging]",
                f'log_dir = "{tmp_path / "logs"}"',
                "[environment]",
                "n_states = 3",
                "n_actions = 2",
                "[agent]",
                "T = 50",
                "[harness]",
                "t_grid = [25, 50]",
                "seeds = [0, 1]",
                f'out_dir = "{tmp_path / "runs"}"',
            ]
        )
    )
    return path
