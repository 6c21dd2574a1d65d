from __future__ import annotations

import itertools

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator
from pydantic import model_validator

from rafalab.errors import ContractViolation

KERNEL_TOL = 1e-9
# exact feature bound over the corners of the value box up to this many states
CORNER_LIMIT = 12


def _frozen_array(value, dtype=float) -> np.ndarray:
    array = np.array(value, dtype=dtype)
    array.setflags(write=False)
    return array


class ValueFn(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    v: np.ndarray = Field(description="Value per state.")
    q: np.ndarray | None = Field(
        default=None, description="Action value per (state, action)."
    )

    @field_validator("v", "q", mode="before")
    @classmethod
    def _as_array(cls, value):
        if value is None:
            return None
        return _frozen_array(value)

    @model_validator(mode="after")
    def _finite(self) -> ValueFn:
        if self.v.ndim != 1 or not np.all(np.isfinite(self.v)):
            raise ValueError("v must be a finite vector")
        if self.q is not None and (
            self.q.ndim != 2 or self.q.shape[0] != self.v.shape[0]
        ):
            raise ValueError("q must be a (state, action) table matching v")
        return self

    @classmethod
    def zeros(cls, n_states: int) -> ValueFn:
        return cls(v=np.zeros(n_states))


class Policy(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    actions: np.ndarray = Field(description="Deterministic action index per state.")

    @field_validator("actions", mode="before")
    @classmethod
    def _as_array(cls, value):
        array = _frozen_array(value, dtype=np.int64)
        if array.ndim != 1 or np.any(array < 0):
            raise ValueError("actions must be a vector of action indices")
        return array

    def __eq__(self, another):
        return hasattr(another, "actions") and np.array_equal(
            self.actions, another.actions
        )

    def __hash__(self):
        return hash(self.key)

    def __getitem__(self, state: int) -> int:
        return int(self.actions[state])

    def __str__(self):
        return f"Policy {self.actions.tolist()}"

    @property
    def key(self) -> bytes:
        return self.actions.tobytes()


class LinearMixtureMdp(BaseModel):
    """Ground truth environment with kernel P(s'|s,a) = phi(s'|s,a)ᵀ theta_star.

    `value_bound` is the L used by planners and bonuses, `feature_bound` the R with
    ‖ψ_V(s,a)‖₂ ≤ R for every V inside the value box.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    phi: np.ndarray = Field(description="Basis features, shape (S, A, S, d).")
    theta_star: np.ndarray = Field(description="True parameter, shape (d,).")
    reward: np.ndarray = Field(description="Known reward table in [0, 1], (S, A).")
    gamma: float = Field(gt=0.0, lt=1.0)
    rho: np.ndarray = Field(description="Initial state distribution.")
    value_bound: float | None = None
    feature_bound: float | None = None

    _kernel: np.ndarray = PrivateAttr()

    @field_validator("phi", "theta_star", "reward", "rho", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def _check_invariants(self) -> LinearMixtureMdp:
        if self.phi.ndim != 4:
            raise ValueError("phi must have shape (S, A, S, d)")
        n_states, n_actions, n_next, d = self.phi.shape
        if n_next != n_states or min(n_states, n_actions, d) < 1:
            raise ValueError(f"inconsistent phi shape {self.phi.shape}")
        if self.theta_star.shape != (d,):
            raise ValueError("theta_star must have length d")
        if self.reward.shape != (n_states, n_actions):
            raise ValueError("reward must have shape (S, A)")
        if np.any(self.reward < 0.0) or np.any(self.reward > 1.0):
            raise ValueError("rewards must lie inside [0, 1]")
        if self.rho.shape != (n_states,) or np.any(self.rho < 0.0):
            raise ValueError("rho must be a nonnegative vector over states")
        if abs(self.rho.sum() - 1.0) > KERNEL_TOL:
            raise ValueError("rho must sum to 1")
        for array in (self.phi, self.theta_star, self.reward):
            if not np.all(np.isfinite(array)):
                raise ValueError("environment arrays must be finite")
        kernel = np.einsum("satd,d->sat", self.phi, self.theta_star)
        if np.any(kernel < -KERNEL_TOL) or np.any(
            np.abs(kernel.sum(axis=2) - 1.0) > KERNEL_TOL
        ):
            raise ValueError("theta_star does not induce a valid transition kernel")
        return self

    def model_post_init(self, __context) -> None:
        kernel = np.einsum("satd,d->sat", self.phi, self.theta_star)
        kernel = np.clip(kernel, 0.0, None)
        kernel.setflags(write=False)
        self._kernel = kernel
        if self.value_bound is None:
            r_max = float(self.reward.max()) or 1.0
            object.__setattr__(self, "value_bound", r_max / (1.0 - self.gamma))
        bound = compute_feature_bound(self.phi, self.value_bound)
        if self.feature_bound is None:
            object.__setattr__(self, "feature_bound", bound)
        elif self.n_states <= CORNER_LIMIT and self.feature_bound < bound - 1e-9:
            raise ContractViolation(
                f"feature_bound {self.feature_bound} below the attained {bound}"
            )

    @property
    def n_states(self) -> int:
        return self.phi.shape[0]

    @property
    def n_actions(self) -> int:
        return self.phi.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.phi.shape[3]

    @property
    def kernel(self) -> np.ndarray:
        """P_{θ*}, shape (S, A, S)."""
        return self._kernel

    def __str__(self):
        return (
            f"LinearMixtureMdp(S={self.n_states}, A={self.n_actions}, "
            f"d={self.feature_dim}, gamma={self.gamma})"
        )


def compute_feature_bound(phi: np.ndarray, value_bound: float) -> float:
    """max ‖ψ_V(s,a)‖₂ over ‖V‖∞ ≤ value_bound.

    ‖ψ_V(s,a)‖² is a convex quadratic in V, so the maximum over the box sits on a
    corner. Past CORNER_LIMIT states the triangle inequality bound is used.
    """
    n_states = phi.shape[0]
    if n_states > CORNER_LIMIT:
        return float(value_bound * np.linalg.norm(phi, axis=3).sum(axis=2).max())
    gram = np.einsum("said,sajd->saij", phi, phi)
    corners = np.array(list(itertools.product((-1.0, 1.0), repeat=n_states)))
    squared = np.einsum("ci,saij,cj->csa", corners, gram, corners)
    return float(value_bound * np.sqrt(max(squared.max(), 0.0)))
