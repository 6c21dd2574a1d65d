from __future__ import annotations

import json
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel

from rafalab.harness.record import RunRecord
from rafalab.posterior import entropy_budget

Status = Literal["pass", "fail", "n/a"]

CHAIN_TOL = 1e-8
ENTROPY_TOL = 1e-9
REGRET_TOL = 1e-6
REBUILD_TOL = 1e-8
ENTROPY_TRIGGERS = ("entropy-log2", "det-ratio-4")
LOG2 = math.log(2.0)


class AuditCheck(BaseModel):
    name: str
    status: Status
    slack: float | None = None
    step: int | None = None
    detail: str = ""

    def line(self) -> str:
        value = "-" if self.slack is None else f"{self.slack:.6g}"
        return f"{self.name} {self.status} {value}"


class AuditReport(BaseModel):
    seed: int
    variant: str
    checks: list[AuditCheck]

    @property
    def passed(self) -> bool:
        return all(check.status != "fail" for check in self.checks)

    def failures(self) -> list[AuditCheck]:
        return [check for check in self.checks if check.status == "fail"]

    def check(self, name: str) -> AuditCheck:
        return next(check for check in self.checks if check.name == name)

    def save(self, path: str) -> None:
        with open(file=path, mode="w") as fp:
            json.dump(self.model_dump(), fp, indent=2, sort_keys=True)


def _first_violation(margins: np.ndarray) -> tuple[float, int | None]:
    """Smallest margin and the first index where it is negative."""
    if margins.size == 0:
        return math.inf, None
    failing = np.flatnonzero(margins < 0.0)
    return float(margins.min()), (int(failing[0]) if failing.size else None)


def verdict(name: str, margins: np.ndarray, detail: str = "") -> AuditCheck:
    slack, step = _first_violation(margins)
    return AuditCheck(
        name=name,
        status="pass" if step is None else "fail",
        slack=None if math.isinf(slack) else slack,
        step=step,
        detail=detail if step is None else f"{detail} first violated at step {step}",
    )


def _not_applicable(name: str, detail: str) -> AuditCheck:
    return AuditCheck(name=name, status="n/a", detail=detail)


def gain_chain(record: RunRecord) -> AuditCheck:
    """H_t must equal H_0 − Σ_{u<t} gain_u for every t."""
    entropies = record.entropies
    gains = np.array([step.gain for step in record.steps])
    chained = record.H0 - np.concatenate(([0.0], np.cumsum(gains)))
    margins = CHAIN_TOL - np.abs(entropies - chained)
    return verdict("gain_chain", margins, "entropy against the summed gains;")


def entropy_monotone(record: RunRecord) -> AuditCheck:
    entropies = record.entropies
    margins = entropies[:-1] + ENTROPY_TOL - entropies[1:]
    return verdict("entropy_monotone", margins, "H_{t+1} <= H_t;")


def switch_count(record: RunRecord) -> AuditCheck:
    if record.switch_kind not in ENTROPY_TRIGGERS:
        return _not_applicable(
            "switch_count", f"trigger {record.switch_kind} carries no epoch bound"
        )
    slack = (record.H0 - record.HT) / LOG2 - (record.K - 1)
    return AuditCheck(
        name="switch_count",
        status="pass" if slack >= -ENTROPY_TOL else "fail",
        slack=slack,
        detail=f"K={record.K}, (H0-HT)/log2={(record.H0 - record.HT) / LOG2:.6g}",
    )


def within_epoch_drop(record: RunRecord) -> AuditCheck:
    if record.switch_kind not in ENTROPY_TRIGGERS:
        return _not_applicable("within_epoch_drop", "no entropy trigger")
    starts = np.array([record.epochs[step.epoch].entropy for step in record.steps])
    current = np.array([step.entropy for step in record.steps])
    margins = LOG2 + ENTROPY_TOL - (starts - current)
    return verdict("within_epoch_drop", margins, "drop since the switch <= log 2;")


def entropy_budget_check(record: RunRecord) -> AuditCheck:
    bound = max(record.feature_bound, record.max_feature_norm)
    budget = entropy_budget(
        record.feature_dim, record.lam, record.noise_scale, len(record.steps), bound
    )
    slack = budget - (record.H0 - record.HT)
    return AuditCheck(
        name="entropy_budget",
        status="pass" if slack >= -ENTROPY_TOL else "fail",
        slack=slack,
        detail=f"budget {budget:.6g} with R={bound:.6g}",
    )


def epoch_policy_constancy(record: RunRecord) -> AuditCheck:
    margins = np.array(
        [
            0.0 if step.action == record.epochs[step.epoch].policy[step.state] else -1.0
            for step in record.steps
        ]
    )
    return verdict("epoch_policy_constancy", margins, "action equals pi^k(s_t);")


def planner_certificate(record: RunRecord) -> AuditCheck:
    certified = [epoch for epoch in record.epochs if epoch.certified]
    if not certified:
        return _not_applicable(
            "planner_certificate", "no epoch planned by a certified planner"
        )
    margins = np.array([record.epsilon - epoch.certificate for epoch in certified])
    check = verdict("planner_certificate", margins, "certificate <= epsilon;")
    if check.step is not None:
        failing = certified[check.step]
        check = check.model_copy(
            update={"step": failing.t_k, "detail": f"epoch {failing.k} exceeds epsilon"}
        )
    return check


def regret_nonneg(record: RunRecord) -> AuditCheck:
    regrets = np.array([step.inst_regret for step in record.steps])
    return verdict("regret_nonneg", regrets + REGRET_TOL, "instantaneous regret >= 0;")


def regularity(record: RunRecord) -> AuditCheck:
    if record.switch_kind not in ENTROPY_TRIGGERS:
        return _not_applicable(
            "regularity", "pairs only bounded under entropy triggers"
        )
    ratios = np.array(
        [
            epoch.regularity_ratio
            for epoch in record.epochs
            if epoch.regularity_ratio is not None
        ]
    )
    check = verdict("regularity", 1.0 + ENTROPY_TOL - ratios, "gain ratio <= 4 eta;")
    if check.step is not None:
        check = check.model_copy(update={"step": record.epochs[check.step].t_k})
    return check


def bonus_optimism(record: RunRecord) -> AuditCheck:
    floors = [epoch.bonus_floor for epoch in record.epochs]
    if not floors or any(floor is None for floor in floors):
        return _not_applicable("bonus_optimism", "no optimistic bonus")
    return verdict("bonus_optimism", np.array(floors) + 1e-12, "r_eff >= r;")


def posterior_rebuild(record: RunRecord) -> AuditCheck:
    if record.rebuild_error is None:
        return _not_applicable("posterior_rebuild", "no buffer rebuild recorded")
    slack = REBUILD_TOL - record.rebuild_error
    return AuditCheck(
        name="posterior_rebuild",
        status="pass" if slack >= 0.0 else "fail",
        slack=slack,
        detail=f"buffer ridge solve off by {record.rebuild_error:.3g}",
    )


def record_length(record: RunRecord) -> AuditCheck:
    missing = record.T - len(record.steps)
    return AuditCheck(
        name="record_length",
        status="pass" if missing == 0 else "fail",
        slack=float(-abs(missing)),
        detail=f"{len(record.steps)} of {record.T} steps",
    )


checks = [
    record_length,
    gain_chain,
    entropy_monotone,
    switch_count,
    within_epoch_drop,
    entropy_budget_check,
    epoch_policy_constancy,
    planner_certificate,
    regret_nonneg,
    regularity,
    bonus_optimism,
    posterior_rebuild,
]


def audit(record: RunRecord) -> AuditReport:
    return AuditReport(
        seed=record.seed,
        variant=record.variant,
        checks=[check(record) for check in checks],
    )
