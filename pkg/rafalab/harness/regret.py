import numpy as np
import structlog

import rafalab.mdp.data as data
import rafalab.mdp.dynamics as dynamics

logger = structlog.get_logger()


class RegretOracle:
    """Exact V* of one environment and V^π for every policy asked about, both cached."""

    def __init__(self, env: data.LinearMixtureMdp, tol: float = dynamics.LINEAR_TOL):
        self.env = env
        self.tol = tol
        self.optimal_policy, optimal = dynamics.optimal_solution(
            env.kernel, env.reward, env.gamma, tol
        )
        self.optimal_values = optimal.v
        self._policy_values: dict[bytes, np.ndarray] = {}

    def policy_values(self, pi: data.Policy) -> np.ndarray:
        if pi.key not in self._policy_values:
            self._policy_values[pi.key] = dynamics.policy_evaluation(
                self.env.kernel, self.env.reward, self.env.gamma, pi, self.tol
            ).v
            logger.debug("Evaluated policy.", policy=str(pi))
        return self._policy_values[pi.key]

    def instantaneous_regret(self, pi: data.Policy, s: int) -> float:
        gap = float(self.optimal_values[s] - self.policy_values(pi)[s])
        return max(gap, -self.tol)


def instantaneous_regret(
    env: data.LinearMixtureMdp,
    pi: data.Policy,
    s: int,
    oracle: RegretOracle | None = None,
) -> float:
    return (oracle or RegretOracle(env)).instantaneous_regret(pi, s)
