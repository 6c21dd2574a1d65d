import math
import warnings

import numpy as np
import pandas as pd
import scipy.stats
import structlog
from pydantic import BaseModel

logger = structlog.get_logger()

# mean regret below this is treated as zero
DEGENERATE_REGRET = 1e-9
MEMBER_COLUMNS = ["config_id", "seed", "T", "cum_regret", "K", "H0", "HT"]
SUMMARY_COLUMNS = [
    "config_id",
    "T",
    "n",
    "mean_cum_regret",
    "stderr_cum_regret",
    "mean_K",
    "mean_entropy_drop",
]


class RatioRow(BaseModel):
    config_id: str
    T_low: int
    T_high: int
    n: int
    ratio: float
    ci_low: float
    ci_high: float
    status: str = "ok"

    def line(self) -> str:
        return (
            f"{self.config_id} {self.T_low}->{self.T_high} n={self.n} "
            f"ratio={self.ratio:.4g} ci=[{self.ci_low:.4g}, {self.ci_high:.4g}] "
            f"{self.status}"
        )


class Comparison(BaseModel):
    arm: str
    baseline: str
    T: int
    ratio: float
    ci_low: float
    ci_high: float
    status: str = "ok"

    @property
    def excludes_one(self) -> bool:
        return self.ci_high < 1.0 or self.ci_low > 1.0


def mean_stderr(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return (float(values.mean()) if values.size else math.nan), math.nan
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def bayesian_regret_estimate(
    members: pd.DataFrame, T: int, config_id: str | None = None
) -> tuple[float, float]:
    """Mean and standard error of cumulative regret at T across members."""
    rows = members[members["T"] == T]
    if config_id is not None:
        rows = rows[rows["config_id"] == config_id]
    if len(rows) < 2:
        logger.warning("Fewer than two members.", T=T, config_id=config_id)
    return mean_stderr(rows["cum_regret"])


def summarize(members: pd.DataFrame) -> pd.DataFrame:
    rows = []
    for (config_id, T), group in members.groupby(["config_id", "T"], sort=True):
        mean, stderr = mean_stderr(group["cum_regret"])
        rows.append(
            {
                "config_id": config_id,
                "T": int(T),
                "n": len(group),
                "mean_cum_regret": mean,
                "stderr_cum_regret": stderr,
                "mean_K": float(group["K"].mean()),
                "mean_entropy_drop": float((group["H0"] - group["HT"]).mean()),
            }
        )
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def _ratio_of_means(numerator, denominator, axis=-1):
    return np.mean(numerator, axis=axis) / np.mean(denominator, axis=axis)


def _bootstrap_interval(
    data: tuple[np.ndarray, np.ndarray],
    paired: bool,
    n_resamples: int,
    confidence: float,
    rng: np.random.Generator,
) -> tuple[float, float]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = scipy.stats.bootstrap(
            data,
            _ratio_of_means,
            paired=paired,
            vectorized=True,
            n_resamples=n_resamples,
            confidence_level=confidence,
            method="percentile",
            random_state=rng,
        )
    return float(result.confidence_interval.low), float(
        result.confidence_interval.high
    )


def scaling_ratios(
    members: pd.DataFrame,
    config_id: str,
    t_grid: list[int],
    n_resamples: int,
    confidence: float,
    rng: np.random.Generator,
) -> list[RatioRow]:
    """Regret(T_high)/Regret(T_low) for consecutive grid points, paired over seeds."""
    t_grid = sorted(t_grid)
    factors = {t_grid[i + 1] / t_grid[i] for i in range(len(t_grid) - 1)}
    if len(factors) > 1:
        logger.warning("T grid is not geometric.", t_grid=t_grid)
    rows = members[members["config_id"] == config_id]
    table = rows.pivot_table(index="seed", columns="T", values="cum_regret")
    ratios = []
    for low, high in zip(t_grid, t_grid[1:]):
        if low not in table.columns or high not in table.columns:
            continue
        pair = table[[low, high]].dropna()
        n = len(pair)
        low_values = pair[low].to_numpy()
        high_values = pair[high].to_numpy()
        low_mean = float(low_values.mean()) if n else math.nan
        if n == 0 or low_mean <= DEGENERATE_REGRET:
            logger.warning("Degenerate scaling ratio.", config_id=config_id, T=low)
            ratios.append(
                RatioRow(
                    config_id=config_id,
                    T_low=low,
                    T_high=high,
                    n=n,
                    ratio=math.nan,
                    ci_low=math.nan,
                    ci_high=math.nan,
                    status="degenerate",
                )
            )
            continue
        ratio = float(high_values.mean()) / low_mean
        if n < 2:
            logger.warning("Too few seeds for a confidence interval.", n=n)
            ci, status = (math.nan, math.nan), "insufficient-seeds"
        else:
            ci = _bootstrap_interval(
                (high_values, low_values), True, n_resamples, confidence, rng
            )
            status = "ok"
        ratios.append(
            RatioRow(
                config_id=config_id,
                T_low=low,
                T_high=high,
                n=n,
                ratio=ratio,
                ci_low=ci[0],
                ci_high=ci[1],
                status=status,
            )
        )
    return ratios


def compare_to_baseline(
    members: pd.DataFrame,
    arm: str,
    baseline: str,
    T: int,
    n_resamples: int,
    confidence: float,
    rng: np.random.Generator,
) -> Comparison:
    """mean regret of `arm` over mean regret of `baseline` at T, independent samples."""
    at_t = members[members["T"] == T]
    arm_values = at_t[at_t["config_id"] == arm]["cum_regret"].to_numpy()
    base_values = at_t[at_t["config_id"] == baseline]["cum_regret"].to_numpy()
    if base_values.size == 0 or arm_values.size == 0 or (
        base_values.mean() <= DEGENERATE_REGRET
    ):
        return Comparison(
            arm=arm,
            baseline=baseline,
            T=T,
            ratio=math.nan,
            ci_low=math.nan,
            ci_high=math.nan,
            status="degenerate",
        )
    ratio = float(arm_values.mean() / base_values.mean())
    if min(arm_values.size, base_values.size) < 2:
        return Comparison(
            arm=arm,
            baseline=baseline,
            T=T,
            ratio=ratio,
            ci_low=math.nan,
            ci_high=math.nan,
            status="insufficient-seeds",
        )
    low, high = _bootstrap_interval(
        (arm_values, base_values), False, n_resamples, confidence, rng
    )
    return Comparison(
        arm=arm, baseline=baseline, T=T, ratio=ratio, ci_low=low, ci_high=high
    )
