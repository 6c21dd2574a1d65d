from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field

import rafalab.planners.data as planner_data
from rafalab.config import AgentConfig, SwitchCondition
from rafalab.posterior import GaussianPosterior, Observation

__all__ = [
    "AgentConfig",
    "EpochState",
    "MemoryBuffer",
    "MemoryEntry",
    "SwitchCondition",
    "Transition",
]


class Transition(BaseModel):
    t: int
    state: int
    action: int
    reward: float
    next_state: int


class MemoryEntry(BaseModel):
    """One transition with the regression pairs it produced, frozen at acting time."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    transition: Transition
    observations: tuple[Observation, ...]


class MemoryBuffer:
    """The data set D_t: every transition with its value-targeted regression pairs."""

    def __init__(self) -> None:
        self.entries: list[MemoryEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def append(
        self, transition: Transition, observations: Sequence[Observation]
    ) -> None:
        self.entries.append(
            MemoryEntry(transition=transition, observations=tuple(observations))
        )

    def observations(self) -> list[Observation]:
        return [obs for entry in self.entries for obs in entry.observations]

    def feature_matrix(self, d: int) -> np.ndarray:
        rows = [obs.psi for obs in self.observations()]
        return np.stack(rows) if rows else np.zeros((0, d))

    def targets(self) -> np.ndarray:
        return np.array([obs.y for obs in self.observations()])

    def ridge_mean(self, prior: GaussianPosterior) -> np.ndarray:
        """θ̂ of `prior` conditioned on the whole buffer, by one dense solve."""
        design = self.feature_matrix(prior.d) / prior.noise_scale
        targets = self.targets() / prior.noise_scale
        return scipy.linalg.solve(
            prior.precision + design.T @ design,
            prior.xty + design.T @ targets,
            assume_a="pos",
        )

    def rebuild_error(
        self, prior: GaussianPosterior, live: GaussianPosterior
    ) -> float:
        """Relative gap between the live posterior mean and `ridge_mean`."""
        rebuilt = self.ridge_mean(prior)
        scale = max(float(np.linalg.norm(rebuilt)), 1.0)
        return float(np.linalg.norm(live.mean - rebuilt)) / scale


class EpochState(BaseModel):
    """Everything frozen at a switch; the epoch's policy never changes."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    k: int = Field(ge=0)
    t_k: int = Field(ge=0)
    H_tk: float
    logdet_tk: float
    frozen_model: planner_data.PlanningModel
    frozen_result: planner_data.PlannerResult
    posterior: GaussianPosterior = Field(description="The belief D_{t_k}.")

    def action(self, s: int) -> int:
        return self.frozen_result.pi[s]
