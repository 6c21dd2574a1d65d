import math

import structlog

import rafalab.agent.state as state
from rafalab.errors import ContractViolation
from rafalab.posterior import GaussianPosterior

LOG2 = math.log(2.0)
LOG4 = 2.0 * LOG2

logger = structlog.get_logger()


def entropy_drop(epoch: state.EpochState, post: GaussianPosterior) -> float:
    """H_{t_k} − H_t, taken from the log determinants."""
    return 0.5 * (post.logdet - epoch.logdet_tk)


def entropy_trigger(epoch: state.EpochState, post: GaussianPosterior) -> bool:
    return entropy_drop(epoch, post) > LOG2


def determinant_trigger(epoch: state.EpochState, post: GaussianPosterior) -> bool:
    """det Σ_t > 4·det Σ_{t_k}."""
    return post.logdet - epoch.logdet_tk > LOG4


def _checked_pair(epoch: state.EpochState, post: GaussianPosterior) -> bool:
    by_entropy = entropy_trigger(epoch, post)
    if by_entropy != determinant_trigger(epoch, post):
        raise ContractViolation(
            f"entropy and determinant triggers disagree in epoch {epoch.k}"
        )
    return by_entropy


def _prediction_mismatch(epoch, post, last_step) -> bool:
    predicted = epoch.frozen_model.successors[last_step.state, last_step.action]
    return int(predicted) != last_step.next_state


def _fixed_period(epoch, post, last_step, period: int) -> bool:
    return last_step.t + 1 - epoch.t_k >= period


def should_switch(
    cond: state.SwitchCondition,
    epoch: state.EpochState,
    post: GaussianPosterior,
    last_step: state.Transition,
) -> bool:
    match cond.kind:
        case "entropy-log2" | "det-ratio-4":
            return _checked_pair(epoch, post)
        case "prediction-mismatch":
            return _prediction_mismatch(epoch, post, last_step)
        case "fixed-period":
            return _fixed_period(epoch, post, last_step, cond.period)
        case "never":
            return False
    raise ContractViolation(f"unknown switch condition {cond.kind}")
