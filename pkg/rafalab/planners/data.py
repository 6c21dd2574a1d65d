from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator

import rafalab.mdp.data as mdp_data
from rafalab.errors import ContractViolation


class PlanningModel(BaseModel):
    """The (P̂, r̂) pair a planner works on, plus its own value bound."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kernel: np.ndarray = Field(description="P̂, shape (S, A, S).")
    reward: np.ndarray = Field(description="Effective reward r̂, shape (S, A).")
    gamma: float = Field(gt=0.0, lt=1.0)
    value_bound: float = Field(gt=0.0)

    _successors: np.ndarray = PrivateAttr()

    @field_validator("kernel", "reward", mode="before")
    @classmethod
    def _as_array(cls, value):
        array = np.array(value, dtype=float)
        array.setflags(write=False)
        return array

    def model_post_init(self, __context) -> None:
        if self.kernel.ndim != 3 or self.reward.shape != self.kernel.shape[:2]:
            raise ContractViolation("kernel must be (S, A, S) and reward (S, A)")
        self._successors = self.kernel.argmax(axis=2)

    @classmethod
    def bounded(
        cls, kernel: np.ndarray, reward: np.ndarray, gamma: float, value_bound: float
    ) -> PlanningModel:
        """Value bound raised to cover max r̂/(1−γ) for inflated rewards."""
        own = float(np.max(reward)) / (1.0 - gamma) if np.size(reward) else 0.0
        return cls(
            kernel=kernel,
            reward=reward,
            gamma=gamma,
            value_bound=max(value_bound, own, 1e-12),
        )

    @property
    def n_states(self) -> int:
        return self.kernel.shape[0]

    @property
    def n_actions(self) -> int:
        return self.kernel.shape[1]

    @property
    def successors(self) -> np.ndarray:
        """Deterministic mode: the most likely successor, lowest index on ties."""
        return self._successors


class SearchBudget(BaseModel):
    model_config = ConfigDict(frozen=True)

    breadth: int = Field(default=3, ge=1, description="B")
    depth: int = Field(default=2, ge=0, description="U")
    proposal_width: int = Field(default=3, ge=1, description="L")
    fan_out: int = Field(default=4, ge=1, description="L'")
    expansions: int = Field(default=50, ge=1, description="E")
    max_rollouts: int = Field(default=100_000, ge=1)
    critic_horizon: int | None = Field(
        default=None, ge=1, description="Inner VI horizon of the critic."
    )


class Rollout(BaseModel):
    states: list[int]
    actions: list[int]
    value: float

    @property
    def first_action(self) -> int:
        return self.actions[0]


class PlannerResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    pi: mdp_data.Policy
    v: mdp_data.ValueFn
    q: np.ndarray = Field(description="Action values; NaN on cells never visited.")
    epsilon_certificate: float
    planner_id: str
    horizon_used: int
    nodes_expanded: int = 0
    certified: bool = Field(
        default=False,
        description="Whether the certificate is guaranteed below the target epsilon.",
    )
