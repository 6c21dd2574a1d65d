import numpy as np
import structlog

import rafalab.mdp.data as data
from rafalab.errors import ContractViolation

LINEAR_TOL = 1e-8
FIXED_POINT_TOL = 1e-6
# actions within this distance of the row maximum count as tied
TIE_TOL = 1e-12

logger = structlog.get_logger()


def project_kernel(raw: np.ndarray) -> np.ndarray:
    """Repair rows of a (S, A, S) table into probability vectors.

    Valid rows are returned untouched. Invalid rows get their negative entries
    clipped to 0 and are renormalized; a row clipped to all zeros becomes uniform.
    """
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise ContractViolation("kernel entries must be finite")
    sums = raw.sum(axis=-1)
    invalid = np.any(raw < 0.0, axis=-1) | (np.abs(sums - 1.0) > data.KERNEL_TOL)
    if not np.any(invalid):
        return raw.copy()
    kernel = raw.copy()
    clipped = np.clip(raw[invalid], 0.0, None)
    totals = clipped.sum(axis=-1, keepdims=True)
    n_next = raw.shape[-1]
    kernel[invalid] = np.where(
        totals > 0.0, clipped / np.where(totals > 0.0, totals, 1.0), 1.0 / n_next
    )
    logger.debug("Projected kernel rows.", rows=int(invalid.sum()))
    return kernel


def transition_kernel(mdp: data.LinearMixtureMdp, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (mdp.feature_dim,):
        raise ContractViolation(
            f"theta has shape {theta.shape}, expected ({mdp.feature_dim},)"
        )
    return project_kernel(np.einsum("satd,d->sat", mdp.phi, theta))


def _values(mdp: data.LinearMixtureMdp, value: data.ValueFn | np.ndarray) -> np.ndarray:
    v = value.v if isinstance(value, data.ValueFn) else np.asarray(value, dtype=float)
    if v.shape != (mdp.n_states,):
        raise ContractViolation(
            f"value has shape {v.shape}, expected ({mdp.n_states},)"
        )
    if not np.all(np.isfinite(v)):
        raise ContractViolation("value must be finite")
    return v


def value_feature(
    mdp: data.LinearMixtureMdp, value: data.ValueFn | np.ndarray, s: int, a: int
) -> np.ndarray:
    """ψ_V(s,a) = Σ_{s'} φ(s'|s,a) V(s')."""
    return _values(mdp, value) @ mdp.phi[s, a]


def value_features(
    mdp: data.LinearMixtureMdp, value: data.ValueFn | np.ndarray
) -> np.ndarray:
    """ψ_V for every (s,a), shape (S, A, d)."""
    return np.einsum("satd,t->sad", mdp.phi, _values(mdp, value))


def sample_successor(row: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from one categorical row."""
    index = int(np.searchsorted(np.cumsum(row), rng.random(), side="right"))
    return min(index, len(row) - 1)


def step(
    mdp: data.LinearMixtureMdp, s: int, a: int, rng: np.random.Generator
) -> tuple[int, float]:
    if not (0 <= s < mdp.n_states and 0 <= a < mdp.n_actions):
        raise ContractViolation(f"invalid state-action ({s}, {a})")
    return sample_successor(mdp.kernel[s, a], rng), float(mdp.reward[s, a])


def greedy_actions(q: np.ndarray) -> np.ndarray:
    """Argmax per state, lowest action index on ties."""
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - TIE_TOL, axis=1)


def backup(kernel: np.ndarray, reward: np.ndarray, gamma: float, v: np.ndarray):
    """Q = r + γ P v."""
    return reward + gamma * kernel @ v


def bellman_residual(
    q: np.ndarray, kernel: np.ndarray, reward: np.ndarray, gamma: float, v: np.ndarray
) -> float:
    """max over cells of |q − r − γ P v|, skipping cells where q is not filled."""
    residual = np.abs(q - backup(kernel, reward, gamma, v))
    filled = ~np.isnan(q)
    return float(residual[filled].max()) if np.any(filled) else 0.0


def _check_inputs(kernel: np.ndarray, reward: np.ndarray, gamma: float) -> None:
    if not (np.all(np.isfinite(kernel)) and np.all(np.isfinite(reward))):
        raise ContractViolation("kernel and reward must be finite")
    if kernel.ndim != 3 or reward.shape != kernel.shape[:2]:
        raise ContractViolation("kernel must be (S, A, S) and reward (S, A)")
    if not 0.0 < gamma < 1.0:
        raise ContractViolation("gamma must lie strictly inside (0, 1)")


def policy_evaluation(
    kernel: np.ndarray,
    reward: np.ndarray,
    gamma: float,
    pi: data.Policy,
    tol: float = LINEAR_TOL,
) -> data.ValueFn:
    """Solve (I − γP^π)V = r^π, then polish by fixed-point sweeps."""
    _check_inputs(kernel, reward, gamma)
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    n_states, n_actions = kernel.shape[:2]
    if pi.actions.shape != (n_states,) or np.any(pi.actions >= n_actions):
        raise ContractViolation(
            f"policy {pi.actions.tolist()} does not fit {n_states} states "
            f"and {n_actions} actions"
        )
    states = np.arange(kernel.shape[0])
    kernel_pi = kernel[states, pi.actions]
    reward_pi = reward[states, pi.actions]
    v = np.linalg.solve(np.eye(len(states)) - gamma * kernel_pi, reward_pi)
    for _ in range(10_000):
        updated = reward_pi + gamma * kernel_pi @ v
        if np.max(np.abs(updated - v)) <= tol:
            break
        v = updated
    return data.ValueFn(v=v, q=backup(kernel, reward, gamma, v))


def optimal_solution(
    kernel: np.ndarray, reward: np.ndarray, gamma: float, tol: float = LINEAR_TOL
) -> tuple[data.Policy, data.ValueFn]:
    """Policy iteration; an action is only replaced on strict improvement."""
    _check_inputs(kernel, reward, gamma)
    actions = greedy_actions(reward)
    states = np.arange(kernel.shape[0])
    for _ in range(10_000):
        pi = data.Policy(actions=actions)
        value = policy_evaluation(kernel, reward, gamma, pi, tol)
        q = value.q
        candidate = greedy_actions(q)
        improves = q[states, candidate] > q[states, actions] + TIE_TOL
        if not np.any(improves):
            break
        actions = np.where(improves, candidate, actions)
    pi = data.Policy(actions=greedy_actions(q))
    value = policy_evaluation(kernel, reward, gamma, pi, tol)
    return pi, value
