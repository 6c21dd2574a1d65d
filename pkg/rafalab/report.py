import math

import pandas as pd
import structlog

import rafalab.config as config
import rafalab.harness.audit as audit
import rafalab.harness.stats as stats
import rafalab.mdp.setup as setup
import rafalab.util as util
from rafalab.errors import ConfigurationError
from rafalab.posterior import entropy_budget

logger = structlog.get_logger()

LOG2 = math.log(2.0)
SWITCH_TOL = 1e-9


def read_members(paths: list[str]) -> pd.DataFrame:
    frames = []
    for path in paths:
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as error:
            raise ConfigurationError(f"can not read {path}: {error}") from error
        if list(frame.columns) != stats.MEMBER_COLUMNS:
            raise ConfigurationError(
                f"{path} has columns {list(frame.columns)}, "
                f"expected {stats.MEMBER_COLUMNS}"
            )
        frames.append(frame)
    if not frames:
        raise ConfigurationError("no member files given")
    members = pd.concat(frames, ignore_index=True)
    members["config_id"] = members["config_id"].astype(str)
    return members.drop_duplicates(["config_id", "seed", "T"], keep="last")


def _budgets(
    members: pd.DataFrame, experiment: config.ExperimentConfig
) -> dict[tuple[str, int, int], float]:
    """Entropy budget per (config_id, seed, T), from the regenerated environments."""
    arms = {name: (env, agent) for name, env, agent in experiment.arm_settings()}
    budgets = {}
    for (config_id, seed), rows in members.groupby(["config_id", "seed"]):
        if config_id not in arms:
            continue
        env_config, agent = arms[config_id]
        env = setup.generate_environment(
            env_config, util.stream(int(seed), "environment")
        )
        for T in rows["T"]:
            budgets[(config_id, int(seed), int(T))] = entropy_budget(
                env.feature_dim, agent.lam, agent.noise_scale, int(T), env.feature_bound
            )
    return budgets


def switch_lines(
    members: pd.DataFrame, experiment: config.ExperimentConfig | None = None
) -> list[str]:
    """K against 1 + (H0 − HT)/log 2 and, given a config, the entropy budget."""
    budgets = _budgets(members, experiment) if experiment else {}
    triggers = (
        {name: agent.switch.kind for name, _, agent in experiment.arm_settings()}
        if experiment
        else {}
    )
    lines = []
    for (config_id, T), group in members.groupby(["config_id", "T"], sort=True):
        bound = 1.0 + (group["H0"] - group["HT"]) / LOG2
        violations = int((group["K"] > bound + SWITCH_TOL).sum())
        found = [budgets.get((config_id, int(seed), int(T))) for seed in group["seed"]]
        known = [budget for budget in found if budget is not None]
        budget_k = f"{1.0 + sum(known) / len(known) / LOG2:.4g}" if known else "-"
        if triggers.get(config_id, "entropy-log2") not in audit.ENTROPY_TRIGGERS:
            status = "n/a"
        else:
            status = "ok" if violations == 0 else "fail"
        lines.append(
            f"switches {config_id} T={int(T)} mean_K={group['K'].mean():.4g} "
            f"bound={bound.mean():.4g} budget={budget_k} violations={violations} "
            f"{status}"
        )
    return lines


def ratio_lines(
    members: pd.DataFrame, n_resamples: int, confidence: float, seed: int
) -> list[str]:
    rng = util.stream(seed, "bootstrap")
    lines = []
    for config_id in sorted(members["config_id"].unique()):
        own = members[members["config_id"] == config_id]
        t_grid = sorted(int(T) for T in own["T"].unique())
        if len(t_grid) < 2:
            lines.append(f"notice {config_id} degenerate: a ratio needs two T points")
            continue
        rows = stats.scaling_ratios(
            members, config_id, t_grid, n_resamples, confidence, rng
        )
        lines.extend(f"ratio {row.line()}" for row in rows)
    return lines


def baseline_lines(
    members: pd.DataFrame,
    baseline: str,
    n_resamples: int,
    confidence: float,
    seed: int,
) -> list[str]:
    if baseline not in set(members["config_id"]):
        return [f"notice no baseline arm {baseline}"]
    rng = util.stream(seed, "bootstrap")
    T = int(members["T"].max())
    lines = []
    for arm in sorted(set(members["config_id"]) - {baseline}):
        comparison = stats.compare_to_baseline(
            members, arm, baseline, T, n_resamples, confidence, rng
        )
        lines.append(
            f"baseline {arm}/{baseline} T={T} ratio={comparison.ratio:.4g} "
            f"ci=[{comparison.ci_low:.4g}, {comparison.ci_high:.4g}] "
            f"excludes_one={comparison.excludes_one} {comparison.status}"
        )
    return lines


def report(
    paths: list[str],
    experiment: config.ExperimentConfig | None = None,
    baseline: str = "myopic",
    seed: int = 0,
) -> list[str]:
    members = read_members(paths)
    harness = experiment.harness if experiment else config.HarnessConfig()
    lines = []
    if members["seed"].nunique() < 2:
        lines.append("notice degenerate: fewer than two seeds, no confidence intervals")
    lines += ratio_lines(members, harness.n_bootstrap, harness.confidence, seed)
    lines += switch_lines(members, experiment)
    lines += baseline_lines(
        members, baseline, harness.n_bootstrap, harness.confidence, seed
    )
    logger.info("Reported.", members=len(members), lines=len(lines))
    return lines
