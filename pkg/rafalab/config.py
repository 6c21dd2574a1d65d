import os
from typing import Any, Literal

import pydantic
import toml

from rafalab.errors import ConfigurationError

global config
config_path = os.path.join(os.path.dirname(__file__), "rafa_config.toml")
with open(file=config_path, mode="r") as fp:
    config = toml.load(fp)

SCHEMA_VERSION = 1

EnvironmentMode = Literal[
    "dirichlet-tabular", "raw-gaussian-projected", "delayed-chain"
]
Variant = Literal["rafa-bma", "rafa-bonus", "rafa-ps"]
PlannerKind = Literal["value-iteration", "tree-search", "beam-search", "mcts"]
SwitchKind = Literal[
    "entropy-log2", "det-ratio-4", "prediction-mismatch", "fixed-period", "never"
]


class _Section(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid", frozen=True)


class EnvironmentConfig(_Section):
    mode: EnvironmentMode = pydantic.Field(
        default="dirichlet-tabular", description="How the environment is generated."
    )
    n_states: int = pydantic.Field(default=5, ge=1)
    n_actions: int = pydantic.Field(default=3, ge=1)
    gamma: float = pydantic.Field(default=0.9, gt=0.0, lt=1.0)
    lam: float = pydantic.Field(default=1.0, gt=0.0)
    feature_dim: int | None = pydantic.Field(
        default=None, ge=1, description="d; the one-hot modes need |S|·|A|·|S|."
    )
    dirichlet_alpha: float = pydantic.Field(default=1.0, gt=0.0)
    reward_low: float = pydantic.Field(default=0.0, ge=0.0, le=1.0)
    reward_high: float = pydantic.Field(default=1.0, ge=0.0, le=1.0)
    chain_slip: float = pydantic.Field(default=0.1, ge=0.0, le=1.0)
    chain_small_reward: float = pydantic.Field(default=0.1, ge=0.0, le=1.0)

    @pydantic.model_validator(mode="after")
    def _check_rewards(self) -> "EnvironmentConfig":
        if self.reward_low > self.reward_high:
            raise ValueError("reward_low must not exceed reward_high")
        if self.mode == "delayed-chain" and self.n_states < 2:
            raise ValueError("delayed-chain needs at least two states")
        return self


class PlannerConfig(_Section):
    kind: PlannerKind = "value-iteration"
    breadth: int = pydantic.Field(default=3, ge=1, description="B")
    depth: int = pydantic.Field(default=2, ge=0, description="U")
    proposal_width: int = pydantic.Field(default=3, ge=1, description="L")
    fan_out: int = pydantic.Field(default=4, ge=1, description="L'")
    expansions: int = pydantic.Field(default=50, ge=1, description="E")
    max_rollouts: int = pydantic.Field(default=100_000, ge=1)
    critic_horizon: int | None = pydantic.Field(
        default=None,
        ge=1,
        description="Inner VI horizon; derived from epsilon if unset.",
    )


class SwitchCondition(_Section):
    kind: SwitchKind = "entropy-log2"
    period: int = pydantic.Field(default=10, ge=1)


class AgentConfig(_Section):
    variant: Variant = "rafa-ps"
    epsilon: float = pydantic.Field(default=0.01, gt=0.0)
    T: int = pydantic.Field(default=2000, ge=1)
    seed: int = pydantic.Field(default=0, ge=0)
    lam: float = pydantic.Field(default=1.0, gt=0.0)
    noise_scale: float = pydantic.Field(default=1.0, gt=0.0)
    value_bound: float | None = pydantic.Field(
        default=None,
        gt=0.0,
        description="L; the environment's r_max/(1−γ) if unset.",
    )
    learn_reward: bool = False
    indicator_targets: bool = pydantic.Field(
        default=True,
        description="Also regress the successor indicators 1[s'=j] on φ(j|s,a).",
    )
    myopic: bool = False
    planner: PlannerConfig = PlannerConfig()
    switch: SwitchCondition = SwitchCondition()


class HarnessConfig(_Section):
    t_grid: list[int] = [500, 2000, 8000]
    seeds: list[int] = list(range(20))
    out_dir: str = "runs"
    jobs: int = pydantic.Field(default=1, ge=1)
    n_bootstrap: int = pydantic.Field(default=2000, ge=10)
    confidence: float = pydantic.Field(default=0.95, gt=0.0, lt=1.0)

    @pydantic.field_validator("t_grid")
    @classmethod
    def _positive_grid(cls, value: list[int]) -> list[int]:
        if not value or any(t <= 0 for t in value):
            raise ValueError("t_grid must hold positive horizons")
        return sorted(set(value))


class LoggingConfig(_Section):
    log_dir: str = "logs"
    level: str = "INFO"


class ArmConfig(_Section):
    """One named sweep arm: an agent override applied on top of [agent]."""

    name: str
    environment: dict[str, Any] = {}
    agent: dict[str, Any] = {}


class ExperimentConfig(_Section):
    schema_version: int = SCHEMA_VERSION
    logging: LoggingConfig = LoggingConfig()
    environment: EnvironmentConfig = EnvironmentConfig()
    agent: AgentConfig = AgentConfig()
    harness: HarnessConfig = HarnessConfig()
    arms: list[ArmConfig] = []

    @pydantic.field_validator("schema_version")
    @classmethod
    def _known_schema(cls, value: int) -> int:
        if value != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {value}")
        return value

    def arm_settings(self) -> list[tuple[str, EnvironmentConfig, AgentConfig]]:
        """Resolve the sweep arms; without [[arms]] the base agent is the only arm."""
        if not self.arms:
            return [(self.agent.variant, self.environment, self.agent)]
        resolved = []
        for arm in self.arms:
            env = EnvironmentConfig(
                **_merge(self.environment.model_dump(), arm.environment)
            )
            agent = AgentConfig(**_merge(self.agent.model_dump(), arm.agent))
            resolved.append((arm.name, env, agent))
        return resolved

    def check_paths(self) -> None:
        check_writable(self.harness.out_dir)
        check_writable(self.logging.log_dir)


def _merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_experiment(path: str | None = None) -> ExperimentConfig:
    """Packaged defaults, overlaid with the TOML file at `path` and RAFALAB_OUT_DIR."""
    raw: dict[str, Any] = dict(config)
    if path is not None:
        try:
            with open(file=path, mode="r") as fp:
                raw = _merge(raw, toml.load(fp))
        except (OSError, toml.TomlDecodeError) as error:
            raise ConfigurationError(f"can not read config {path}: {error}") from error
    out_dir = os.environ.get("RAFALAB_OUT_DIR")
    if out_dir:
        raw = _merge(raw, {"harness": {"out_dir": out_dir}})
    try:
        return ExperimentConfig(**raw)
    except pydantic.ValidationError as error:
        raise ConfigurationError(str(error)) from error


def check_writable(path: str) -> None:
    """Raise unless `path` is, or can be created as, a writable directory."""
    existing = os.path.abspath(path)
    while not os.path.exists(existing):
        parent = os.path.dirname(existing)
        if parent == existing:
            break
        existing = parent
    if not os.path.isdir(existing):
        raise ConfigurationError(
            f"{path} is not writable: {existing} is not a directory"
        )
    if not os.access(existing, os.W_OK | os.X_OK):
        raise ConfigurationError(
            f"{path} is not writable: no write access to {existing}"
        )
