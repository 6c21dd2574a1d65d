import os

import numpy as np
import toml

import rafalab.mdp.data as data
from rafalab.errors import ConfigurationError

ENVIRONMENT_FORMAT = "rafalab-environment"
FORMAT_VERSION = 1


def environment_to_dict(mdp: data.LinearMixtureMdp) -> dict:
    return {
        "format": ENVIRONMENT_FORMAT,
        "version": FORMAT_VERSION,
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "feature_dim": mdp.feature_dim,
        "gamma": mdp.gamma,
        "value_bound": mdp.value_bound,
        "feature_bound": mdp.feature_bound,
        "rho": mdp.rho.tolist(),
        "reward": mdp.reward.tolist(),
        "theta_star": mdp.theta_star.tolist(),
        "phi": mdp.phi.tolist(),
    }


def environment_from_dict(raw: dict) -> data.LinearMixtureMdp:
    if raw.get("format") != ENVIRONMENT_FORMAT:
        raise ConfigurationError(f"not an environment file: format={raw.get('format')}")
    if raw.get("version") != FORMAT_VERSION:
        raise ConfigurationError(
            f"unsupported environment version {raw.get('version')}"
        )
    phi = np.array(raw["phi"], dtype=float)
    expected = (raw["n_states"], raw["n_actions"], raw["n_states"], raw["feature_dim"])
    if phi.shape != expected:
        raise ConfigurationError(f"phi has shape {phi.shape}, header says {expected}")
    return data.LinearMixtureMdp(
        phi=phi,
        theta_star=raw["theta_star"],
        reward=raw["reward"],
        gamma=raw["gamma"],
        rho=raw["rho"],
        value_bound=raw["value_bound"],
        feature_bound=raw["feature_bound"],
    )


def save_environment(mdp: data.LinearMixtureMdp, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(file=path, mode="w") as fp:
        toml.dump(environment_to_dict(mdp), fp)


def load_environment(path: str) -> data.LinearMixtureMdp:
    try:
        with open(file=path, mode="r") as fp:
            raw = toml.load(fp)
    except (OSError, toml.TomlDecodeError) as error:
        raise ConfigurationError(f"can not read environment {path}: {error}") from error
    return environment_from_dict(raw)
