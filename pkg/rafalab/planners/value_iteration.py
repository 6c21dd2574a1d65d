import math

import numpy as np
import structlog

import rafalab.mdp.data as mdp_data
import rafalab.mdp.dynamics as dynamics
import rafalab.planners.data as data
from rafalab.errors import ConfigurationError

logger = structlog.get_logger()


def required_horizon(
    gamma: float, epsilon: float, value_bound: float
) -> tuple[int, bool]:
    """Smallest U with γ^{U−1}·L ≤ ε, and whether the bound was vacuous."""
    if not 0.0 < gamma < 1.0:
        raise ConfigurationError("gamma must lie strictly inside (0, 1)")
    if epsilon <= 0.0:
        raise ConfigurationError("epsilon must be positive")
    if epsilon >= value_bound:
        logger.warning(
            "Horizon bound is vacuous.", epsilon=epsilon, value_bound=value_bound
        )
        return 1, True
    return 1 + math.ceil(math.log(epsilon / value_bound) / math.log(gamma)), False


def truncated_values(model: data.PlanningModel, horizon: int) -> np.ndarray:
    """Q after `horizon` backups from zero; horizon 1 gives Q = r̂."""
    if horizon < 1:
        raise ConfigurationError(f"horizon must be at least 1, got {horizon}")
    v = np.zeros(model.n_states)
    for _ in range(horizon):
        q = dynamics.backup(model.kernel, model.reward, model.gamma, v)
        v = q.max(axis=1)
    return q


def critic(model: data.PlanningModel, horizon: int) -> np.ndarray:
    return truncated_values(model, horizon).max(axis=1)


def epsilon_check(result: data.PlannerResult, model: data.PlanningModel) -> float:
    return dynamics.bellman_residual(
        result.q, model.kernel, model.reward, model.gamma, result.v.v
    )


def value_iteration(model: data.PlanningModel, horizon: int) -> data.PlannerResult:
    q = truncated_values(model, horizon)
    v = q.max(axis=1)
    return data.PlannerResult(
        pi=mdp_data.Policy(actions=dynamics.greedy_actions(q)),
        v=mdp_data.ValueFn(v=v, q=q),
        q=q,
        epsilon_certificate=dynamics.bellman_residual(
            q, model.kernel, model.reward, model.gamma, v
        ),
        planner_id="value-iteration",
        horizon_used=horizon,
        nodes_expanded=horizon * model.n_states * model.n_actions,
        certified=True,
    )
