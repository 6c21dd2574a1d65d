import os

import pandas as pd
import structlog
from joblib import Parallel, delayed
from pydantic import BaseModel
from structlog.contextvars import bound_contextvars

import rafalab.agent.agents as agents
import rafalab.config as config
import rafalab.harness.audit as audit
import rafalab.harness.stats as stats
import rafalab.mdp.setup as setup
import rafalab.util as util
from rafalab.errors import ConfigurationError, RafaError

logger = structlog.get_logger()


class MemberSpec(BaseModel):
    config_id: str
    seed: int
    environment: config.EnvironmentConfig
    agent: config.AgentConfig
    t_grid: list[int]


class MemberResult(BaseModel):
    config_id: str
    seed: int
    status: str
    error: str | None = None
    audit_failures: list[str] = []
    rows: list[dict] = []


class SweepResult:
    def __init__(self, results: list[MemberResult]) -> None:
        self.results = results
        rows = [row for result in results for row in result.rows]
        self.members = pd.DataFrame(rows, columns=stats.MEMBER_COLUMNS)
        self.summary = stats.summarize(self.members)

    @property
    def failed(self) -> list[MemberResult]:
        return [result for result in self.results if result.status != "ok"]

    def status_table(self) -> str:
        lines = ["config_id seed status detail"]
        for result in self.results:
            detail = result.error or ",".join(result.audit_failures) or "-"
            lines.append(f"{result.config_id} {result.seed} {result.status} {detail}")
        return "\n".join(lines)

    def save(self, out_dir: str) -> dict[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "members": os.path.join(out_dir, "members.csv"),
            "summary": os.path.join(out_dir, "summary.csv"),
        }
        self.members.to_csv(paths["members"], index=False)
        self.summary.to_csv(paths["summary"], index=False)
        return paths


def _checkpoint_path(out_dir: str, spec: MemberSpec) -> str:
    return os.path.join(out_dir, "checkpoints", f"{spec.config_id}-{spec.seed}.json")


def run_member(spec: MemberSpec, out_dir: str | None = None) -> MemberResult:
    """One environment draw and one run at the largest T; smaller T are prefixes."""
    checkpoint = _checkpoint_path(out_dir, spec) if out_dir else None
    if checkpoint and os.path.exists(checkpoint):
        with open(file=checkpoint, mode="r") as fp:
            done = MemberResult.model_validate_json(fp.read())
        if done.status == "ok":
            logger.info("Resumed member.", config_id=spec.config_id, seed=spec.seed)
            return done
    with bound_contextvars(config_id=spec.config_id, seed=spec.seed):
        horizon = max(spec.t_grid)
        try:
            env = setup.generate_environment(
                spec.environment, util.stream(spec.seed, "environment")
            )
            cfg = spec.agent.model_copy(update={"seed": spec.seed, "T": horizon})
            record = agents.run(env, cfg)
        except RafaError as error:
            logger.error("Member failed.", error=str(error))
            return MemberResult(
                config_id=spec.config_id,
                seed=spec.seed,
                status="failed",
                error=str(error),
            )
        failures = [check.name for check in audit.audit(record).failures()]
        result = MemberResult(
            config_id=spec.config_id,
            seed=spec.seed,
            status="audit-failed" if failures else "ok",
            audit_failures=failures,
            rows=[
                {
                    "config_id": spec.config_id,
                    "seed": spec.seed,
                    "T": t,
                    "cum_regret": record.regret_at(t),
                    "K": record.epochs_until(t),
                    "H0": record.H0,
                    "HT": record.entropy_at(t),
                }
                for t in spec.t_grid
            ],
        )
    if checkpoint:
        os.makedirs(os.path.dirname(checkpoint), exist_ok=True)
        with open(file=checkpoint, mode="w") as fp:
            fp.write(result.model_dump_json())
    return result


def member_specs(experiment: config.ExperimentConfig) -> list[MemberSpec]:
    seeds = list(dict.fromkeys(experiment.harness.seeds))
    return [
        MemberSpec(
            config_id=config_id,
            seed=seed,
            environment=environment,
            agent=agent,
            t_grid=experiment.harness.t_grid,
        )
        for config_id, environment, agent in experiment.arm_settings()
        for seed in seeds
    ]


def run_sweep(
    experiment: config.ExperimentConfig,
    out_dir: str | None = None,
    jobs: int | None = None,
) -> SweepResult:
    specs = member_specs(experiment)
    if not specs:
        raise ConfigurationError("the sweep grid is empty")
    jobs = jobs or experiment.harness.jobs
    logger.info("Starting sweep.", members=len(specs), jobs=jobs)
    results = Parallel(n_jobs=jobs)(
        delayed(run_member)(spec, out_dir) for spec in specs
    )
    sweep = SweepResult(results)
    if out_dir:
        sweep.save(out_dir)
    logger.info("Finished sweep.", failed=len(sweep.failed))
    return sweep


def scaling_probe(
    agent_cfg: config.AgentConfig,
    env_gen_cfg: config.EnvironmentConfig,
    t_grid: list[int],
    n_seeds: int,
    jobs: int = 1,
    n_resamples: int = 2000,
    confidence: float = 0.95,
    bootstrap_seed: int = 0,
) -> list[stats.RatioRow]:
    experiment = config.ExperimentConfig(
        environment=env_gen_cfg,
        agent=agent_cfg,
        harness=config.HarnessConfig(t_grid=t_grid, seeds=list(range(n_seeds))),
    )
    sweep = run_sweep(experiment, jobs=jobs)
    return stats.scaling_ratios(
        sweep.members,
        agent_cfg.variant,
        t_grid,
        n_resamples,
        confidence,
        util.stream(bootstrap_seed, "bootstrap"),
    )
