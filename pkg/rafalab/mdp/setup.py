import numpy as np
import structlog

import rafalab.config as config
import rafalab.mdp.data as data
import rafalab.mdp.dynamics as dynamics
from rafalab.errors import ConfigurationError

logger = structlog.get_logger()


def from_tabular(
    kernel: np.ndarray,
    reward: np.ndarray,
    gamma: float,
    rho: np.ndarray | None = None,
    value_bound: float | None = None,
) -> data.LinearMixtureMdp:
    """Embed a tabular MDP one-hot: d = S·A·S and θ* holds the probabilities."""
    kernel = np.asarray(kernel, dtype=float)
    n_states, n_actions, _ = kernel.shape
    d = n_states * n_actions * n_states
    phi = np.zeros((n_states, n_actions, n_states, d))
    # feature index of (s, a, s') is its position in the flattened table
    phi.reshape(-1, d)[np.arange(d), np.arange(d)] = 1.0
    if rho is None:
        rho = np.full(n_states, 1.0 / n_states)
    return data.LinearMixtureMdp(
        phi=phi,
        theta_star=kernel.reshape(-1),
        reward=reward,
        gamma=gamma,
        rho=rho,
        value_bound=value_bound,
    )


def _one_hot_dim(gen_config: config.EnvironmentConfig) -> int:
    d = gen_config.n_states * gen_config.n_actions * gen_config.n_states
    if gen_config.feature_dim is not None and gen_config.feature_dim != d:
        raise ConfigurationError(
            f"mode {gen_config.mode} needs feature_dim {d}, "
            f"got {gen_config.feature_dim}"
        )
    return d


def _rewards(gen_config: config.EnvironmentConfig, rng: np.random.Generator):
    return rng.uniform(
        gen_config.reward_low,
        gen_config.reward_high,
        size=(gen_config.n_states, gen_config.n_actions),
    )


def _dirichlet_tabular(
    gen_config: config.EnvironmentConfig, rng: np.random.Generator
) -> data.LinearMixtureMdp:
    _one_hot_dim(gen_config)
    n_states, n_actions = gen_config.n_states, gen_config.n_actions
    kernel = rng.dirichlet(
        np.full(n_states, gen_config.dirichlet_alpha), size=(n_states, n_actions)
    )
    # rows sum to 1 up to rounding; put the rounding error on the largest entry
    largest = kernel.argmax(axis=2)
    rows = np.indices((n_states, n_actions))
    kernel[rows[0], rows[1], largest] += 1.0 - kernel.sum(axis=2)
    return from_tabular(kernel, _rewards(gen_config, rng), gen_config.gamma)


def _raw_gaussian_projected(
    gen_config: config.EnvironmentConfig, rng: np.random.Generator
) -> data.LinearMixtureMdp:
    """d base kernels from projected Gaussian rows, mixed by θ* on the simplex."""
    d = gen_config.feature_dim
    if d is None or d < 1:
        raise ConfigurationError("raw-gaussian-projected needs feature_dim >= 1")
    n_states, n_actions = gen_config.n_states, gen_config.n_actions
    raw = rng.normal(size=(d, n_states, n_actions, n_states))
    bases = np.stack([dynamics.project_kernel(block) for block in raw])
    phi = np.moveaxis(bases, 0, -1)
    theta_raw = np.abs(rng.normal(scale=np.sqrt(gen_config.lam), size=d))
    if theta_raw.sum() <= 0.0:
        theta_raw = np.ones(d)
    theta_star = theta_raw / theta_raw.sum()
    return data.LinearMixtureMdp(
        phi=phi,
        theta_star=theta_star,
        reward=_rewards(gen_config, rng),
        gamma=gen_config.gamma,
        rho=np.full(n_states, 1.0 / n_states),
    )


def _delayed_chain(
    gen_config: config.EnvironmentConfig, rng: np.random.Generator
) -> data.LinearMixtureMdp:
    """Action 0 resets to the first state, action 1 advances towards the paying end."""
    if gen_config.n_actions != 2:
        raise ConfigurationError("delayed-chain has exactly two actions")
    _one_hot_dim(gen_config)
    n_states = gen_config.n_states
    last = n_states - 1
    kernel = np.zeros((n_states, 2, n_states))
    reward = np.zeros((n_states, 2))
    for s in range(n_states):
        kernel[s, 0, 0] = 1.0
        ahead = min(s + 1, last)
        kernel[s, 1, ahead] += 1.0 - gen_config.chain_slip
        kernel[s, 1, s] += gen_config.chain_slip
    reward[0, 0] = gen_config.chain_small_reward
    reward[last, 1] = 1.0
    rho = np.zeros(n_states)
    rho[0] = 1.0
    return from_tabular(kernel, reward, gen_config.gamma, rho=rho)


generators = {
    "dirichlet-tabular": _dirichlet_tabular,
    "raw-gaussian-projected": _raw_gaussian_projected,
    "delayed-chain": _delayed_chain,
}


def generate_environment(
    gen_config: config.EnvironmentConfig, rng: np.random.Generator
) -> data.LinearMixtureMdp:
    mdp = generators[gen_config.mode](gen_config, rng)
    logger.debug(
        "Generated environment.",
        mode=gen_config.mode,
        n_states=mdp.n_states,
        n_actions=mdp.n_actions,
        feature_dim=mdp.feature_dim,
        feature_bound=mdp.feature_bound,
    )
    return mdp
