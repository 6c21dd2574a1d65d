import math

import numpy as np
import pydantic
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import rafalab.config as config
import rafalab.mdp.data as data
import rafalab.mdp.dynamics as dynamics
import rafalab.mdp.setup as setup
import rafalab.mdp.storage as storage
import rafalab.util as util
from rafalab.errors import ConfigurationError, ContractViolation


def test_from_tabular_embeds_kernel_one_hot(rng):
    kernel = rng.dirichlet(np.ones(3), size=(3, 2))
    mdp = setup.from_tabular(kernel, np.zeros((3, 2)), 0.9)
    assert mdp.feature_dim == 18
    assert np.allclose(mdp.kernel, kernel)
    assert np.allclose(mdp.rho, np.full(3, 1 / 3))


def test_invalid_theta_star_is_rejected(rng):
    kernel = rng.dirichlet(np.ones(3), size=(3, 2))
    mdp = setup.from_tabular(kernel, np.zeros((3, 2)), 0.9)
    with pytest.raises(pydantic.ValidationError):
        data.LinearMixtureMdp(
            phi=mdp.phi,
            theta_star=2 * mdp.theta_star,
            reward=mdp.reward,
            gamma=0.9,
            rho=mdp.rho,
        )


def test_rewards_outside_unit_interval_are_rejected():
    with pytest.raises(pydantic.ValidationError):
        setup.from_tabular(np.ones((1, 1, 1)), np.array([[1.5]]), 0.9)


def test_one_hot_feature_bound_is_value_bound_times_sqrt_states(small_env):
    assert small_env.feature_bound == pytest.approx(
        small_env.value_bound * math.sqrt(small_env.n_states)
    )


def test_project_kernel_leaves_valid_rows_untouched():
    raw = np.array([[[0.2, 0.3, 0.5]]])
    assert np.array_equal(dynamics.project_kernel(raw), raw)


def test_project_kernel_clips_and_renormalizes():
    raw = np.array([[[0.5, -0.1, 0.6]]])
    assert np.allclose(dynamics.project_kernel(raw), [[[0.5 / 1.1, 0.0, 0.6 / 1.1]]])


def test_project_kernel_falls_back_to_uniform():
    raw = np.array([[[-1.0, -2.0, 0.0, -0.5]]])
    assert np.allclose(dynamics.project_kernel(raw), np.full((1, 1, 4), 0.25))


@settings(max_examples=50, deadline=None)
@given(
    hnp.arrays(
        np.float64,
        (2, 2, 3),
        elements=st.floats(-5, 5, allow_nan=False, allow_infinity=False),
    )
)
def test_projected_rows_are_distributions(raw):
    kernel = dynamics.project_kernel(raw)
    assert np.all(kernel >= 0.0)
    assert np.allclose(kernel.sum(axis=2), 1.0)


def test_transition_kernel_checks_dimension(small_env):
    with pytest.raises(ContractViolation):
        dynamics.transition_kernel(small_env, np.ones(small_env.feature_dim + 1))


def test_value_feature_is_linear_in_theta(small_env, rng):
    v = rng.uniform(-5, 5, size=small_env.n_states)
    for s in range(small_env.n_states):
        for a in range(small_env.n_actions):
            psi = dynamics.value_feature(small_env, v, s, a)
            assert psi @ small_env.theta_star == pytest.approx(
                small_env.kernel[s, a] @ v
            )
    features = dynamics.value_features(small_env, v)
    assert np.allclose(features[1, 0], dynamics.value_feature(small_env, v, 1, 0))


def test_value_feature_rejects_non_finite_values(small_env):
    with pytest.raises(ContractViolation):
        dynamics.value_feature(small_env, np.array([0.0, np.nan, 1.0]), 0, 0)


def test_sample_successor_on_point_mass(rng):
    point = np.array([0, 0, 1.0])
    assert all(dynamics.sample_successor(point, rng) == 2 for _ in range(20))


def test_step_rejects_invalid_pairs(small_env, rng):
    with pytest.raises(ContractViolation):
        dynamics.step(small_env, small_env.n_states, 0, rng)


def test_greedy_actions_break_ties_on_lowest_index():
    q = np.array([[1.0, 1.0, 0.5], [0.0, 2.0, 2.0]])
    assert dynamics.greedy_actions(q).tolist() == [0, 1]


def test_policy_evaluation_of_single_state():
    kernel = np.ones((1, 2, 1))
    reward = np.array([[1.0, 0.0]])
    value = dynamics.policy_evaluation(kernel, reward, 0.9, data.Policy(actions=[0]))
    assert value.v[0] == pytest.approx(10.0)


def test_optimal_solution_satisfies_bellman_optimality(small_env):
    pi, value = dynamics.optimal_solution(
        small_env.kernel, small_env.reward, small_env.gamma
    )
    q = dynamics.backup(small_env.kernel, small_env.reward, small_env.gamma, value.v)
    assert np.allclose(q.max(axis=1), value.v, atol=1e-7)
    assert pi == data.Policy(actions=dynamics.greedy_actions(q))


def test_policy_evaluation_rejects_bad_gamma(small_env):
    with pytest.raises(ContractViolation):
        dynamics.policy_evaluation(
            small_env.kernel, small_env.reward, 1.0, data.Policy(actions=[0, 0, 0])
        )


def test_delayed_chain_layout(chain_env):
    assert chain_env.rho.tolist() == [1.0, 0.0, 0.0, 0.0]
    assert chain_env.kernel[2, 0, 0] == 1.0
    assert chain_env.kernel[2, 1, 3] == pytest.approx(0.9)
    assert chain_env.reward[3, 1] == 1.0
    assert chain_env.reward[0, 0] == pytest.approx(0.1)


def test_delayed_chain_needs_two_actions(rng):
    with pytest.raises(ConfigurationError):
        setup.generate_environment(
            config.EnvironmentConfig(mode="delayed-chain", n_actions=3), rng
        )


def test_one_hot_mode_rejects_wrong_feature_dim(rng):
    with pytest.raises(ConfigurationError):
        setup.generate_environment(
            config.EnvironmentConfig(n_states=2, n_actions=2, feature_dim=5), rng
        )


def test_raw_gaussian_projected_builds_valid_mixture(rng):
    gen_config = config.EnvironmentConfig(
        mode="raw-gaussian-projected", n_states=4, n_actions=2, feature_dim=3
    )
    mdp = setup.generate_environment(gen_config, rng)
    assert mdp.feature_dim == 3
    assert np.allclose(mdp.kernel.sum(axis=2), 1.0)
    assert mdp.theta_star.sum() == pytest.approx(1.0)


def test_raw_gaussian_projected_needs_feature_dim(rng):
    with pytest.raises(ConfigurationError):
        setup.generate_environment(
            config.EnvironmentConfig(mode="raw-gaussian-projected"), rng
        )


def test_environment_file_round_trip(small_env, tmp_path):
    path = str(tmp_path / "env.toml")
    storage.save_environment(small_env, path)
    loaded = storage.load_environment(path)
    assert np.array_equal(loaded.phi, small_env.phi)
    assert np.array_equal(loaded.theta_star, small_env.theta_star)
    assert loaded.feature_bound == small_env.feature_bound


def test_environment_file_with_foreign_format(tmp_path):
    path = tmp_path / "env.toml"
    path.write_text('format = "something-else"\nversion = 1\n')
    with pytest.raises(ConfigurationError):
        storage.load_environment(str(path))


def test_step_frequencies_follow_the_kernel_row():
    kernel = np.zeros((2, 1, 2))
    kernel[:, 0] = [0.25, 0.75]
    mdp = setup.from_tabular(kernel, np.zeros((2, 1)), 0.9)
    rng = np.random.default_rng(11)
    draws = [dynamics.step(mdp, 0, 0, rng)[0] for _ in range(100_000)]
    assert np.mean(draws) == pytest.approx(0.75, abs=0.01)


def test_policy_evaluation_agrees_with_monte_carlo(small_env):
    pi = data.Policy(actions=[1, 0, 1])
    exact = dynamics.policy_evaluation(
        small_env.kernel, small_env.reward, small_env.gamma, pi
    )
    rng = np.random.default_rng(5)
    n_episodes, length = 20_000, 200
    states = np.zeros(n_episodes, dtype=int)
    returns = np.zeros(n_episodes)
    cumulative = np.cumsum(small_env.kernel, axis=2)
    for u in range(length):
        actions = pi.actions[states]
        returns += small_env.gamma**u * small_env.reward[states, actions]
        rows = cumulative[states, actions]
        states = np.minimum(
            (rng.random(n_episodes)[:, None] >= rows).sum(axis=1),
            small_env.n_states - 1,
        )
    stderr = returns.std(ddof=1) / np.sqrt(n_episodes)
    assert abs(returns.mean() - exact.v[0]) <= 4 * stderr + 1e-6


@pytest.mark.parametrize("actions", [[0, 0, 2], [0, 1]])
def test_policy_evaluation_rejects_policies_that_do_not_fit(small_env, actions):
    with pytest.raises(ContractViolation):
        dynamics.policy_evaluation(
            small_env.kernel,
            small_env.reward,
            small_env.gamma,
            data.Policy(actions=actions),
        )


def test_same_seed_gives_the_same_environment():
    gen_config = config.EnvironmentConfig(n_states=4, n_actions=2)
    first = setup.generate_environment(gen_config, util.stream(5, "environment"))
    second = setup.generate_environment(gen_config, util.stream(5, "environment"))
    other = setup.generate_environment(gen_config, util.stream(6, "environment"))
    assert np.array_equal(first.theta_star, second.theta_star)
    assert np.array_equal(first.reward, second.reward)
    assert not np.array_equal(first.theta_star, other.theta_star)


def test_huge_dirichlet_concentration_gives_near_uniform_rows(rng):
    gen_config = config.EnvironmentConfig(
        n_states=4, n_actions=2, dirichlet_alpha=1e6
    )
    mdp = setup.generate_environment(gen_config, rng)
    assert np.abs(mdp.kernel - 0.25).max() < 1e-2
