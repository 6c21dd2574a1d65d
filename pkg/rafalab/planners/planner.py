from abc import ABC, abstractmethod

import numpy as np
import structlog
from structlog.contextvars import bound_contextvars

import rafalab.config as config
import rafalab.mdp.data as mdp_data
import rafalab.mdp.dynamics as dynamics
import rafalab.planners.data as data
import rafalab.planners.mcts as mcts
import rafalab.planners.search as search
import rafalab.planners.value_iteration as vi


class Planner(ABC):
    """Turns a planning model into a policy with values and a Bellman certificate."""

    planner_id: str = ""

    def __init__(self, epsilon: float, budget: data.SearchBudget | None = None) -> None:
        self.epsilon = epsilon
        self.budget = budget or data.SearchBudget()
        self._logger = structlog.get_logger()

    def horizon(self, model: data.PlanningModel) -> int:
        horizon, _ = vi.required_horizon(model.gamma, self.epsilon, model.value_bound)
        return horizon

    def plan(
        self, model: data.PlanningModel, rng: np.random.Generator | None = None
    ) -> data.PlannerResult:
        with bound_contextvars(planner=self.planner_id):
            result = self._plan(model, rng)
            self._logger.info(
                "Planned.",
                horizon=result.horizon_used,
                nodes_expanded=result.nodes_expanded,
                certificate=result.epsilon_certificate,
            )
        return result

    @abstractmethod
    def _plan(
        self, model: data.PlanningModel, rng: np.random.Generator | None
    ) -> data.PlannerResult:
        pass


class ValueIterationPlanner(Planner):
    planner_id = "value-iteration"

    def __init__(
        self,
        epsilon: float,
        budget: data.SearchBudget | None = None,
        fixed_horizon: int | None = None,
    ) -> None:
        super().__init__(epsilon, budget)
        self.fixed_horizon = fixed_horizon

    def _plan(self, model, rng):
        if self.fixed_horizon is None:
            return vi.value_iteration(model, self.horizon(model))
        result = vi.value_iteration(model, self.fixed_horizon)
        return result.model_copy(update={"certified": False})


class SearchPlanner(Planner, ABC):
    """Runs a root search from every state; q is filled on the root cells it scored."""

    def _plan(self, model, rng):
        critic_horizon = self.budget.critic_horizon or self.horizon(model)
        critic_values = vi.critic(model, critic_horizon)
        q = np.full((model.n_states, model.n_actions), np.nan)
        actions = np.zeros(model.n_states, dtype=np.int64)
        nodes = 0
        for s in range(model.n_states):
            actions[s], q[s], expanded = self._search(model, critic_values, s, rng)
            nodes += expanded
        v = np.nanmax(q, axis=1)
        return data.PlannerResult(
            pi=mdp_data.Policy(actions=actions),
            v=mdp_data.ValueFn(v=v),
            q=q,
            epsilon_certificate=dynamics.bellman_residual(
                q, model.kernel, model.reward, model.gamma, v
            ),
            planner_id=self.planner_id,
            horizon_used=self.budget.depth + 1,
            nodes_expanded=nodes,
        )

    @abstractmethod
    def _search(
        self,
        model: data.PlanningModel,
        critic_values: np.ndarray,
        s: int,
        rng: np.random.Generator | None,
    ) -> tuple[int, np.ndarray, int]:
        pass


class TreeSearchPlanner(SearchPlanner):
    planner_id = "tree-search"

    def _search(self, model, critic_values, s, rng):
        rollouts = search.tree_rollouts(model, critic_values, s, self.budget)
        best = search.best_rollout(rollouts)
        return best.first_action, search.root_values(rollouts, model.n_actions), len(
            rollouts
        )


class BeamSearchPlanner(SearchPlanner):
    planner_id = "beam-search"

    def _search(self, model, critic_values, s, rng):
        rollouts = search.beam_rollouts(model, critic_values, s, self.budget)
        best = search.best_rollout(rollouts)
        return best.first_action, search.root_values(rollouts, model.n_actions), len(
            rollouts
        )


class MctsPlanner(SearchPlanner):
    planner_id = "mcts"

    def _search(self, model, critic_values, s, rng):
        if rng is None:
            rng = np.random.default_rng(0)
        tree = mcts.SearchTree(model, critic_values, s, self.budget, rng)
        tree.run()
        return tree.best_rollout().first_action, tree.root_values(), tree.expansions


planners: dict[str, type[Planner]] = {
    "value-iteration": ValueIterationPlanner,
    "tree-search": TreeSearchPlanner,
    "beam-search": BeamSearchPlanner,
    "mcts": MctsPlanner,
}


def build_planner(planner_config: config.PlannerConfig, epsilon: float) -> Planner:
    budget = data.SearchBudget(
        breadth=planner_config.breadth,
        depth=planner_config.depth,
        proposal_width=planner_config.proposal_width,
        fan_out=planner_config.fan_out,
        expansions=planner_config.expansions,
        max_rollouts=planner_config.max_rollouts,
        critic_horizon=planner_config.critic_horizon,
    )
    return planners[planner_config.kind](epsilon=epsilon, budget=budget)
