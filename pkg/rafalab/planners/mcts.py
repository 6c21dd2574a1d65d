from __future__ import annotations

import numpy as np
import structlog

import rafalab.mdp.dynamics as dynamics
import rafalab.planners.data as data
import rafalab.planners.search as search

logger = structlog.get_logger()


class StateNode:
    def __init__(
        self,
        state: int,
        depth: int,
        value: float,
        terminal: bool,
        leaf_action: int | None = None,
    ):
        self.state = state
        self.depth = depth
        self.value = value
        self.visits = 0
        self.children: dict[int, ActionNode] = {}
        # no expandable leaf left below
        self.closed = terminal
        # best last action of a depth-U leaf
        self.leaf_action = leaf_action

    @property
    def expanded(self) -> bool:
        return bool(self.children)


class ActionNode:
    def __init__(self, action: int, reward: float):
        self.action = action
        self.reward = reward
        self.q = 0.0
        # sampled successor state -> (node, number of draws)
        self.children: dict[int, tuple[StateNode, int]] = {}

    @property
    def closed(self) -> bool:
        return all(node.closed for node, _ in self.children.values())


class SearchTree:
    """Greedy-on-Q̂ tree search over a stochastic model with value backups.

    Selection follows the highest Q̂ (lowest action on ties) among actions with an
    open subtree, then the least visited open successor. Expansion stops at depth U:
    a node there is a leaf valued by the best one-step Q̂ = r̂ + γ·P̂·critic over its
    proposals, which settles the last action of a U+1 step rollout. Exhausting
    the tree takes Σ_{i<U} B^i ≤ B^U expansions. The root is always expanded, so
    with U = 0 its children are leaves valued by the critic.
    """

    def __init__(
        self,
        model: data.PlanningModel,
        critic_values: np.ndarray,
        s0: int,
        budget: data.SearchBudget,
        rng: np.random.Generator,
    ):
        self.model = model
        self.critic_values = critic_values
        self.budget = budget
        self.rng = rng
        self.leaf_depth = budget.depth
        self.root = StateNode(s0, 0, float(critic_values[s0]), terminal=False)
        self.expansions = 0

    def _proposals(self, state: int) -> list[int]:
        return search.elite(
            self.model,
            self.critic_values,
            state,
            self.budget.proposal_width,
            stochastic=True,
        )

    def _new_state(self, state: int, depth: int) -> StateNode:
        if depth < self.leaf_depth:
            value = float(self.critic_values[state])
            return StateNode(state, depth, value, terminal=False)
        if depth > self.leaf_depth:
            value = float(self.critic_values[state])
            return StateNode(state, depth, value, terminal=True)
        proposals = self._proposals(state)
        lookahead = self.model.kernel[state, proposals] @ self.critic_values
        q = self.model.reward[state, proposals] + self.model.gamma * lookahead
        best = int(np.argmax(q))
        return StateNode(
            state, depth, float(q[best]), terminal=True, leaf_action=proposals[best]
        )

    def run(self) -> None:
        for _ in range(self.budget.expansions):
            if self.root.closed:
                break
            path = self._select()
            self._expand(path[-1])
            self._backup(path)
            self.expansions += 1

    def _select(self) -> list[StateNode]:
        node = self.root
        path = [node]
        while node.expanded:
            node.visits += 1
            action = max(
                (a for a in node.children.values() if not a.closed),
                key=lambda a: (a.q, -a.action),
            )
            node = min(
                (child for child, _ in action.children.values() if not child.closed),
                key=lambda child: (child.visits, child.state),
            )
            path.append(node)
        node.visits += 1
        return path

    def _expand(self, node: StateNode) -> None:
        for a in self._proposals(node.state):
            action = ActionNode(a, float(self.model.reward[node.state, a]))
            row = self.model.kernel[node.state, a]
            for _ in range(self.budget.fan_out):
                successor = dynamics.sample_successor(row, self.rng)
                child, draws = action.children.get(
                    successor, (self._new_state(successor, node.depth + 1), 0)
                )
                action.children[successor] = (child, draws + 1)
            node.children[a] = action
        self._refresh(node)

    def _refresh(self, node: StateNode) -> None:
        for action in node.children.values():
            mean = sum(
                child.value * draws for child, draws in action.children.values()
            ) / sum(draws for _, draws in action.children.values())
            action.q = action.reward + self.model.gamma * mean
        node.value = max(action.q for action in node.children.values())
        node.closed = all(action.closed for action in node.children.values())

    def _backup(self, path: list[StateNode]) -> None:
        for node in reversed(path[:-1]):
            self._refresh(node)

    def root_values(self) -> np.ndarray:
        values = np.full(self.model.n_actions, np.nan)
        for a, action in self.root.children.items():
            values[a] = action.q
        return values

    def best_rollout(self) -> data.Rollout:
        """Follow the highest Q̂ from the root, taking the most drawn successor."""
        node = self.root
        states, actions = [node.state], []
        while node.expanded:
            action = max(node.children.values(), key=lambda a: (a.q, -a.action))
            node, _ = max(
                action.children.values(), key=lambda item: (item[1], -item[0].state)
            )
            actions.append(action.action)
            states.append(node.state)
        if node.leaf_action is not None:
            actions.append(node.leaf_action)
            states.append(int(self.model.successors[node.state, node.leaf_action]))
        return data.Rollout(states=states, actions=actions, value=self.root.value)


def mcts(
    model: data.PlanningModel,
    critic_values: np.ndarray,
    s0: int,
    budget: data.SearchBudget,
    rng: np.random.Generator,
) -> tuple[int, data.Rollout]:
    tree = SearchTree(model, critic_values, s0, budget, rng)
    tree.run()
    rollout = tree.best_rollout()
    logger.debug("Searched tree.", root=s0, expansions=tree.expansions)
    return rollout.first_action, rollout
