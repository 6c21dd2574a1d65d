"""The epoch loop: plan far ahead on a frozen model, act on its first step.

Each epoch freezes a planning model built from the posterior, plans once, and acts
with that policy until the switching condition fires. The posterior is updated
every step with the value-targeted pair (ψ_{V_k}(s,a), V_k(s')) and, with
`indicator_targets`, the pairs (φ(j|s,a), 1[s'=j]) of every successor j.
"""
from __future__ import annotations

import numpy as np
import structlog
from structlog.contextvars import bind_contextvars, bound_contextvars

import rafalab.agent.reward as reward_model
import rafalab.agent.state as state
import rafalab.agent.switching as switching
import rafalab.mdp.data as mdp_data
import rafalab.mdp.dynamics as dynamics
import rafalab.planners.data as planner_data
import rafalab.planners.planner as planner
import rafalab.util as util
from rafalab.errors import RafaError, RunAborted
from rafalab.harness.record import EpochSummary, RunRecord, StepRecord
from rafalab.harness.regret import RegretOracle
from rafalab.posterior import GaussianPosterior, Observation, regularity_coefficient


def _bma_model(env, post, reward, value_bound, rng, previous_values):
    kernel = dynamics.transition_kernel(env, post.bma_parameter())
    return kernel, reward


def _bonus_model(env, post, reward, value_bound, rng, previous_values):
    kernel = dynamics.transition_kernel(env, post.bma_parameter())
    features = dynamics.value_features(env, previous_values)
    bonus = np.array(
        [
            [post.bonus(features[s, a], value_bound) for a in range(env.n_actions)]
            for s in range(env.n_states)
        ]
    )
    return kernel, reward + bonus


def _sampled_model(env, post, reward, value_bound, rng, previous_values):
    return dynamics.transition_kernel(env, post.sample(rng)), reward


model_builders = {
    "rafa-bma": _bma_model,
    "rafa-bonus": _bonus_model,
    "rafa-ps": _sampled_model,
}


def plan_model(
    env: mdp_data.LinearMixtureMdp,
    post: GaussianPosterior,
    variant: str,
    value_bound: float,
    rng: np.random.Generator,
    previous_values: np.ndarray | None = None,
    reward: np.ndarray | None = None,
) -> planner_data.PlanningModel:
    """(P̂, r̂_eff) of one epoch.

    The bonus uses ψ at `previous_values`, the last epoch's planned V (zero before
    the first plan).
    """
    if previous_values is None:
        previous_values = np.zeros(env.n_states)
    if reward is None:
        reward = env.reward
    kernel, effective = model_builders[variant](
        env, post, np.asarray(reward, dtype=float), value_bound, rng, previous_values
    )
    return planner_data.PlanningModel.bounded(
        kernel, effective, env.gamma, value_bound
    )


class RafaAgent:
    def __init__(
        self,
        env: mdp_data.LinearMixtureMdp,
        cfg: state.AgentConfig,
        prior: GaussianPosterior | None = None,
    ) -> None:
        self.env = env
        self.cfg = cfg
        self.value_bound = cfg.value_bound or env.value_bound
        self.posterior = prior or GaussianPosterior.prior(
            env.feature_dim, lam=cfg.lam, noise_scale=cfg.noise_scale
        )
        self.prior = self.posterior
        if self.posterior.d != env.feature_dim:
            raise RafaError("prior dimension does not match the environment")
        if cfg.myopic:
            self.planner: planner.Planner = planner.ValueIterationPlanner(
                epsilon=cfg.epsilon, fixed_horizon=1
            )
        else:
            self.planner = planner.build_planner(cfg.planner, cfg.epsilon)
        self.rewards = (
            reward_model.RewardModel(
                env.n_states, env.n_actions, cfg.lam, cfg.noise_scale
            )
            if cfg.learn_reward
            else None
        )
        self.oracle = RegretOracle(env)
        self.buffer = state.MemoryBuffer()
        self.dynamics_rng = util.stream(cfg.seed, "dynamics")
        self.planner_rng = util.stream(cfg.seed, "planner")
        self.posterior_rng = util.stream(cfg.seed, "posterior")
        self.eta = regularity_coefficient(env.feature_dim)
        self._bonus_floor: float | None = None
        self._logger = structlog.get_logger()

    def run(self) -> RunRecord:
        with bound_contextvars(
            variant=self.cfg.variant,
            seed=self.cfg.seed,
            myopic=self.cfg.myopic,
            epoch=0,
        ):
            record = self._new_record()
            try:
                self._execute(record)
            except RafaError as error:
                step = len(record.steps)
                self._logger.error("Run aborted.", step=step, error=str(error))
                aborted = record.model_copy(
                    update={"aborted": True, "abort_reason": str(error)}
                )
                raise RunAborted(str(error), step=step, record=aborted) from error
        return record

    def _new_record(self) -> RunRecord:
        entropy = self.posterior.entropy()
        return RunRecord(
            seed=self.cfg.seed,
            variant="myopic" if self.cfg.myopic else self.cfg.variant,
            switch_kind=self.cfg.switch.kind,
            epsilon=self.cfg.epsilon,
            T=self.cfg.T,
            feature_dim=self.env.feature_dim,
            lam=self.posterior.lam,
            noise_scale=self.posterior.noise_scale,
            value_bound=self.value_bound,
            feature_bound=self.env.feature_bound,
            H0=entropy,
            HT=entropy,
            config=self.cfg.model_dump(),
        )

    def _planning_reward(self) -> np.ndarray:
        if self.rewards is None:
            return self.env.reward
        draw = self.posterior_rng if self.cfg.variant == "rafa-ps" else None
        return self.rewards.estimate(draw)

    def _open_epoch(
        self, k: int, t: int, previous: state.EpochState | None
    ) -> state.EpochState:
        post = self.posterior
        base_reward = self._planning_reward()
        model = plan_model(
            self.env,
            post,
            self.cfg.variant,
            self.value_bound,
            self.posterior_rng,
            previous_values=None if previous is None else previous.frozen_result.v.v,
            reward=base_reward,
        )
        result = self.planner.plan(model, self.planner_rng)
        epoch = state.EpochState(
            k=k,
            t_k=t,
            H_tk=post.entropy(),
            logdet_tk=post.logdet,
            frozen_model=model,
            frozen_result=result,
            posterior=post,
        )
        bind_contextvars(epoch=k)
        self._logger.info("Opened epoch.", t=t, entropy=epoch.H_tk)
        self._bonus_floor = (
            float(np.min(model.reward - base_reward))
            if self.cfg.variant == "rafa-bonus"
            else None
        )
        return epoch

    def _regularity_ratio(
        self, epoch: state.EpochState, late: GaussianPosterior
    ) -> float:
        """Worst I(ψ|D_{t_k}) / (4η·I(ψ|D_late)) over the epoch's grid features."""
        features = dynamics.value_features(self.env, epoch.frozen_result.v.v)
        worst = 0.0
        for psi in features.reshape(-1, self.env.feature_dim):
            late_gain = late.information_gain(psi)
            if late_gain <= 0.0:
                continue
            ratio = epoch.posterior.information_gain(psi) / (4.0 * self.eta * late_gain)
            worst = max(worst, ratio)
        return worst

    def _close_epoch(
        self, record: RunRecord, epoch: state.EpochState, late: GaussianPosterior
    ) -> None:
        result = epoch.frozen_result
        record.epochs.append(
            EpochSummary(
                k=epoch.k,
                t_k=epoch.t_k,
                entropy=epoch.H_tk,
                logdet=epoch.logdet_tk,
                policy=result.pi.actions.tolist(),
                planner_id=result.planner_id,
                horizon_used=result.horizon_used,
                certificate=result.epsilon_certificate,
                certified=result.certified,
                nodes_expanded=result.nodes_expanded,
                bonus_floor=self._bonus_floor,
                regularity_ratio=self._regularity_ratio(epoch, late),
            )
        )

    def _observations(
        self, s: int, a: int, s_next: int, values: np.ndarray
    ) -> list[Observation]:
        """The epoch-value pair, then one indicator pair per successor state."""
        observations = [
            Observation(
                psi=dynamics.value_feature(self.env, values, s, a),
                y=float(values[s_next]),
            )
        ]
        if self.cfg.indicator_targets:
            observations.extend(
                Observation(psi=self.env.phi[s, a, j], y=float(j == s_next))
                for j in range(self.env.n_states)
            )
        return observations

    def _execute(self, record: RunRecord) -> None:
        s = dynamics.sample_successor(self.env.rho, self.dynamics_rng)
        epoch = self._open_epoch(0, 0, None)
        before_update = self.posterior
        cum_regret = 0.0
        max_norm = 0.0
        for t in range(self.cfg.T):
            a = epoch.action(s)
            s_next, r = dynamics.step(self.env, s, a, self.dynamics_rng)
            observations = self._observations(s, a, s_next, epoch.frozen_result.v.v)
            features = np.stack([obs.psi for obs in observations])
            max_norm = max(max_norm, float(np.linalg.norm(features)))
            inst_regret = self.oracle.instantaneous_regret(epoch.frozen_result.pi, s)
            cum_regret += inst_regret
            entropy = self.posterior.entropy()
            gain = self.posterior.batch_information_gain(features)
            before_update = self.posterior
            self.posterior = self.posterior.update_many(observations)
            transition = state.Transition(
                t=t, state=s, action=a, reward=r, next_state=s_next
            )
            self.buffer.append(transition, observations)
            if self.rewards is not None:
                self.rewards.update(s, a, r)
            record.steps.append(
                StepRecord(
                    t=t,
                    state=s,
                    action=a,
                    reward=r,
                    next_state=s_next,
                    entropy=entropy,
                    gain=gain,
                    epoch=epoch.k,
                    inst_regret=inst_regret,
                    cum_regret=cum_regret,
                )
            )
            self._logger.debug("Stepped.", t=t, state=s, action=a, regret=inst_regret)
            s = s_next
            if t + 1 < self.cfg.T and switching.should_switch(
                self.cfg.switch, epoch, self.posterior, transition
            ):
                self._close_epoch(record, epoch, before_update)
                epoch = self._open_epoch(epoch.k + 1, t + 1, epoch)
        self._close_epoch(record, epoch, before_update)
        record.HT = self.posterior.entropy()
        record.max_feature_norm = max_norm
        record.rebuild_error = self.buffer.rebuild_error(self.prior, self.posterior)
        self._logger.info(
            "Finished run.", epochs=record.K, cum_regret=cum_regret, entropy=record.HT
        )


def run(
    env: mdp_data.LinearMixtureMdp,
    cfg: state.AgentConfig,
    prior: GaussianPosterior | None = None,
) -> RunRecord:
    return RafaAgent(env, cfg, prior).run()


def baseline_myopic(
    env: mdp_data.LinearMixtureMdp, cfg: state.AgentConfig
) -> RunRecord:
    """Same loop planning one step ahead on r̂ only."""
    return run(env, cfg.model_copy(update={"myopic": True}))
