"""Deterministic-mode search over the planning model.

Every (s,a) has the single successor `model.successors[s, a]`. A rollout takes U+1
actions from s0 and is scored Σ_u γ^u r̂(s_u,a_u) + γ^{U+1}·critic(s_{U+1}).
Ties between rollouts go to the lexicographically smallest action sequence.
"""
from __future__ import annotations

import itertools
from typing import Iterator, Sequence

import numpy as np

import rafalab.planners.data as data
from rafalab.errors import ConfigurationError


def _one_step_scores(
    model: data.PlanningModel, critic_values: np.ndarray, s: int
) -> np.ndarray:
    return model.reward[s] + model.gamma * critic_values[model.successors[s]]


def elite(
    model: data.PlanningModel,
    critic_values: np.ndarray,
    s: int,
    width: int,
    stochastic: bool = False,
) -> list[int]:
    """Top-`width` actions by r̂ + γ·critic, returned in action index order."""
    if stochastic:
        scores = model.reward[s] + model.gamma * model.kernel[s] @ critic_values
    else:
        scores = _one_step_scores(model, critic_values, s)
    return sorted(int(a) for a in np.argsort(-scores, kind="stable")[:width])


def rollout_value(
    model: data.PlanningModel,
    critic_values: np.ndarray,
    s0: int,
    actions: Sequence[int],
) -> data.Rollout:
    states = [s0]
    value = 0.0
    discount = 1.0
    for a in actions:
        s = states[-1]
        value += discount * model.reward[s, a]
        discount *= model.gamma
        states.append(int(model.successors[s, a]))
    value += discount * critic_values[states[-1]]
    return data.Rollout(states=states, actions=list(actions), value=float(value))


def best_rollout(rollouts: Sequence[data.Rollout]) -> data.Rollout:
    """Highest value; among equal values the smallest action sequence."""
    best = rollouts[0]
    for rollout in rollouts[1:]:
        if rollout.value > best.value or (
            rollout.value == best.value and rollout.actions < best.actions
        ):
            best = rollout
    return best


def root_values(rollouts: Sequence[data.Rollout], n_actions: int) -> np.ndarray:
    """Best rollout value per first action, NaN for actions never tried."""
    values = np.full(n_actions, np.nan)
    for rollout in rollouts:
        a = rollout.first_action
        if np.isnan(values[a]) or rollout.value > values[a]:
            values[a] = rollout.value
    return values


def _check_budget(n_rollouts: int, budget: data.SearchBudget) -> None:
    if n_rollouts > budget.max_rollouts:
        raise ConfigurationError(
            f"search would score {n_rollouts} rollouts, cap is {budget.max_rollouts}"
        )


def enumerate_rollouts(
    model: data.PlanningModel,
    critic_values: np.ndarray,
    s0: int,
    depth: int,
    max_rollouts: int = 100_000,
) -> list[data.Rollout]:
    """All |A|^{U+1} rollouts in lexicographic order."""
    if model.n_actions ** (depth + 1) > max_rollouts:
        raise ConfigurationError(
            f"{model.n_actions}^{depth + 1} rollouts exceed the cap {max_rollouts}"
        )
    return [
        rollout_value(model, critic_values, s0, actions)
        for actions in itertools.product(range(model.n_actions), repeat=depth + 1)
    ]


def _tree_sequences(
    model: data.PlanningModel,
    critic_values: np.ndarray,
    s: int,
    steps_left: int,
    breadth: int,
) -> Iterator[tuple[int, ...]]:
    if steps_left == 0:
        yield ()
        return
    for a in elite(model, critic_values, s, breadth):
        successor = int(model.successors[s, a])
        for rest in _tree_sequences(
            model, critic_values, successor, steps_left - 1, breadth
        ):
            yield (a,) + rest


def tree_rollouts(
    model: data.PlanningModel,
    critic_values: np.ndarray,
    s0: int,
    budget: data.SearchBudget,
) -> list[data.Rollout]:
    breadth = min(budget.breadth, model.n_actions)
    _check_budget(breadth ** (budget.depth + 1), budget)
    return [
        rollout_value(model, critic_values, s0, actions)
        for actions in _tree_sequences(
            model, critic_values, s0, budget.depth + 1, breadth
        )
    ]


def tree_search(
    model: data.PlanningModel,
    critic_values: np.ndarray,
    s0: int,
    budget: data.SearchBudget,
) -> tuple[int, data.Rollout]:
    best = best_rollout(tree_rollouts(model, critic_values, s0, budget))
    return best.first_action, best


def beam_rollouts(
    model: data.PlanningModel,
    critic_values: np.ndarray,
    s0: int,
    budget: data.SearchBudget,
) -> list[data.Rollout]:
    """The rollouts kept after the last level.

    Every beam state proposes its `proposal_width` elite actions, scores each by the
    one-step Q̂ = r̂ + γ·critic(s'), and keeps the B best of them, lowest action on
    ties. Keeping as many actions as were proposed never prunes.
    """
    if budget.proposal_width < budget.breadth:
        raise ConfigurationError("beam search needs proposal_width >= breadth")
    width = min(budget.proposal_width, model.n_actions)
    breadth = min(budget.breadth, width)
    _check_budget(breadth ** (budget.depth + 1), budget)
    prefixes: list[tuple[list[int], int]] = [([], s0)]
    for _ in range(budget.depth + 1):
        extended = []
        for actions, s in prefixes:
            scores = _one_step_scores(model, critic_values, s)
            proposals = elite(model, critic_values, s, width)
            ranked = sorted(proposals, key=lambda a: (-scores[a], a))
            for a in sorted(ranked[:breadth]):
                extended.append((actions + [a], int(model.successors[s, a])))
        prefixes = extended
    return [
        rollout_value(model, critic_values, s0, actions) for actions, _ in prefixes
    ]


def beam_search(
    model: data.PlanningModel,
    critic_values: np.ndarray,
    s0: int,
    budget: data.SearchBudget,
) -> tuple[int, data.Rollout]:
    best = best_rollout(beam_rollouts(model, critic_values, s0, budget))
    return best.first_action, best
