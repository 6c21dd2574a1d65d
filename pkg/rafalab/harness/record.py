from __future__ import annotations

import json
import os
from typing import Any

import numpy as np
from pydantic import BaseModel, Field

# JSON lines keys of one step, in file order
STEP_FIELDS = (
    "t",
    "state",
    "action",
    "reward",
    "next_state",
    "entropy",
    "gain",
    "epoch",
    "inst_regret",
    "cum_regret",
)


class StepRecord(BaseModel):
    t: int
    state: int
    action: int
    reward: float
    next_state: int
    entropy: float = Field(description="Posterior entropy before this step's update.")
    gain: float = Field(description="Information gain of this step's feature.")
    epoch: int
    inst_regret: float
    cum_regret: float


class EpochSummary(BaseModel):
    k: int
    t_k: int
    entropy: float
    logdet: float
    policy: list[int]
    planner_id: str
    horizon_used: int
    certificate: float
    certified: bool
    nodes_expanded: int
    bonus_floor: float | None = Field(
        default=None,
        description="min of r̂_eff − r̂ over the table, bonus variant only.",
    )
    regularity_ratio: float | None = Field(
        default=None,
        description="max over grid features of I(·|D_{t_k}) / (4η·I(·|D_{t_{k+1}−1})).",
    )


class RunRecord(BaseModel):
    seed: int
    variant: str
    switch_kind: str
    epsilon: float
    T: int
    feature_dim: int
    lam: float
    noise_scale: float
    value_bound: float
    feature_bound: float
    max_feature_norm: float = Field(
        default=0.0, description="Largest per-step √Σ‖ψ‖² over the regression pairs."
    )
    rebuild_error: float | None = Field(
        default=None,
        description="Relative gap of θ̂ to a dense solve over the memory buffer.",
    )
    H0: float
    HT: float
    steps: list[StepRecord] = []
    epochs: list[EpochSummary] = []
    config: dict[str, Any] = {}
    aborted: bool = False
    abort_reason: str | None = None

    @property
    def K(self) -> int:
        return len(self.epochs)

    @property
    def switch_times(self) -> list[int]:
        return [epoch.t_k for epoch in self.epochs]

    @property
    def entropies(self) -> np.ndarray:
        """H_0 … H_T, one longer than the step list."""
        return np.array([step.entropy for step in self.steps] + [self.HT])

    @property
    def cumulative_regret(self) -> float:
        return self.steps[-1].cum_regret if self.steps else 0.0

    def regret_at(self, horizon: int) -> float:
        """Cumulative regret after the first `horizon` steps."""
        if horizon == 0:
            return 0.0
        return self.steps[horizon - 1].cum_regret

    def epochs_until(self, horizon: int) -> int:
        return sum(1 for epoch in self.epochs if epoch.t_k < horizon)

    def entropy_at(self, horizon: int) -> float:
        return float(self.entropies[horizon])

    def summary(self) -> dict[str, Any]:
        data = self.model_dump(exclude={"steps"})
        data["K"] = self.K
        data["cum_regret"] = self.cumulative_regret
        return data

    def save(self, directory: str, stem: str = "run") -> dict[str, str]:
        os.makedirs(directory, exist_ok=True)
        paths = {
            "steps": os.path.join(directory, f"{stem}.jsonl"),
            "summary": os.path.join(directory, f"{stem}.summary.json"),
        }
        with open(file=paths["steps"], mode="w") as fp:
            for step in self.steps:
                fp.write(json.dumps(step.model_dump()) + "\n")
        with open(file=paths["summary"], mode="w") as fp:
            json.dump(self.summary(), fp, indent=2, sort_keys=True)
        return paths

    @classmethod
    def load(cls, directory: str, stem: str = "run") -> RunRecord:
        with open(file=os.path.join(directory, f"{stem}.summary.json")) as fp:
            data = json.load(fp)
        with open(file=os.path.join(directory, f"{stem}.jsonl")) as fp:
            steps = [json.loads(line) for line in fp if line.strip()]
        data.pop("K", None)
        data.pop("cum_regret", None)
        return cls(steps=steps, **data)
