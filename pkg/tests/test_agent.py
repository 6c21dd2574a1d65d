import collections

import numpy as np
import pytest

import rafalab.agent.agents as agents
import rafalab.agent.reward as reward
import rafalab.agent.state as state
import rafalab.agent.switching as switching
import rafalab.config as config
import rafalab.harness.audit as audit
import rafalab.mdp.dynamics as dynamics
import rafalab.planners.planner as planner
from rafalab.errors import ContractViolation, RafaError, RunAborted
from rafalab.posterior import GaussianPosterior, Observation


def _epoch(env, post):
    model = agents.plan_model(env, post, "rafa-bma", env.value_bound, None)
    result = planner.ValueIterationPlanner(0.1).plan(model)
    return state.EpochState(
        k=0,
        t_k=0,
        H_tk=post.entropy(),
        logdet_tk=post.logdet,
        frozen_model=model,
        frozen_result=result,
        posterior=post,
    )


def _transition(t, s, a, s_next):
    return state.Transition(t=t, state=s, action=a, reward=0.0, next_state=s_next)


def test_entropy_and_determinant_triggers_fire_together(small_env):
    post = GaussianPosterior.prior(small_env.feature_dim)
    epoch = _epoch(small_env, post)
    psi = np.zeros(small_env.feature_dim)
    psi[0] = 1.0
    late = post.update(Observation(psi=psi, y=0.0))
    assert switching.entropy_drop(epoch, late) == pytest.approx(0.5 * np.log(2.0))
    assert not switching.entropy_trigger(epoch, late)
    late = late.update(Observation(psi=psi * 2, y=0.0))
    assert switching.entropy_trigger(epoch, late)
    assert switching.determinant_trigger(epoch, late)
    condition = config.SwitchCondition(kind="det-ratio-4")
    assert switching.should_switch(condition, epoch, late, _transition(1, 0, 0, 0))


def test_fixed_period_and_never(small_env):
    post = GaussianPosterior.prior(small_env.feature_dim)
    epoch = _epoch(small_env, post)
    every_three = config.SwitchCondition(kind="fixed-period", period=3)
    never = config.SwitchCondition(kind="never")
    assert not switching.should_switch(
        every_three, epoch, post, _transition(1, 0, 0, 0)
    )
    assert switching.should_switch(every_three, epoch, post, _transition(2, 0, 0, 0))
    assert not switching.should_switch(never, epoch, post, _transition(99, 0, 0, 0))


def test_prediction_mismatch(small_env):
    post = GaussianPosterior.prior(small_env.feature_dim)
    epoch = _epoch(small_env, post)
    condition = config.SwitchCondition(kind="prediction-mismatch")
    predicted = int(epoch.frozen_model.successors[0, 1])
    other = (predicted + 1) % small_env.n_states
    assert not switching.should_switch(
        condition, epoch, post, _transition(0, 0, 1, predicted)
    )
    assert switching.should_switch(condition, epoch, post, _transition(0, 0, 1, other))


@pytest.mark.parametrize("variant", ["rafa-bma", "rafa-bonus", "rafa-ps"])
def test_runs_are_complete_and_pass_audits(small_env, small_agent, variant):
    record = agents.run(small_env, small_agent.model_copy(update={"variant": variant}))
    assert len(record.steps) == small_agent.T
    assert record.switch_times[0] == 0
    assert record.switch_times == sorted(set(record.switch_times))
    assert all(step.inst_regret >= -1e-6 for step in record.steps)
    report = audit.audit(record)
    assert report.passed, [check.detail for check in report.failures()]


def test_policy_is_frozen_inside_an_epoch(small_env, small_agent):
    record = agents.run(small_env, small_agent)
    for step in record.steps:
        assert step.action == record.epochs[step.epoch].policy[step.state]


def test_fixed_period_switch_times(small_env):
    cfg = config.AgentConfig(
        T=20, switch=config.SwitchCondition(kind="fixed-period", period=5)
    )
    assert agents.run(small_env, cfg).switch_times == [0, 5, 10, 15]


def test_never_switching_keeps_one_epoch(small_env):
    cfg = config.AgentConfig(T=40, switch=config.SwitchCondition(kind="never"))
    assert agents.run(small_env, cfg).K == 1


def test_known_parameter_gives_near_optimal_play(small_env):
    prior = GaussianPosterior.concentrated(small_env.theta_star)
    cfg = config.AgentConfig(variant="rafa-bma", T=50)
    record = agents.run(small_env, cfg, prior=prior)
    assert record.K == 1
    bound = 2 * cfg.epsilon / (1 - small_env.gamma)
    assert max(step.inst_regret for step in record.steps) <= bound


def test_replay_is_deterministic(small_env, small_agent):
    first = agents.run(small_env, small_agent)
    second = agents.run(small_env, small_agent)
    other = agents.run(small_env, small_agent.model_copy(update={"seed": 4}))
    assert first.model_dump_json() == second.model_dump_json()
    assert first.model_dump_json() != other.model_dump_json()


def test_myopic_baseline_plans_one_step(small_env, small_agent):
    record = agents.baseline_myopic(small_env, small_agent)
    assert record.variant == "myopic"
    assert all(epoch.horizon_used == 1 for epoch in record.epochs)


def test_bonus_model_only_raises_rewards(small_env, rng):
    post = GaussianPosterior.prior(small_env.feature_dim)
    previous = rng.uniform(0, 5, size=small_env.n_states)
    model = agents.plan_model(
        small_env, post, "rafa-bonus", small_env.value_bound, rng, previous
    )
    assert np.all(model.reward >= small_env.reward)
    assert model.value_bound >= small_env.value_bound


def test_posterior_sampling_model_is_a_kernel(small_env, rng):
    post = GaussianPosterior.prior(small_env.feature_dim)
    model = agents.plan_model(small_env, post, "rafa-ps", small_env.value_bound, rng)
    assert np.allclose(model.kernel.sum(axis=2), 1.0)
    assert np.all(model.kernel >= 0.0)


def test_learned_rewards(small_env):
    cfg = config.AgentConfig(T=40, learn_reward=True)
    assert len(agents.run(small_env, cfg).steps) == 40


def test_reward_model_concentrates_on_observed_rewards(rng):
    model = reward.RewardModel(2, 2, lam=1.0, noise_scale=0.1)
    for _ in range(50):
        model.update(1, 0, 0.7)
    estimate = model.estimate()
    assert estimate[1, 0] == pytest.approx(0.7, abs=1e-2)
    assert np.all((model.estimate(rng) >= 0) & (model.estimate(rng) <= 1))


def test_memory_buffer():
    buffer = state.MemoryBuffer()
    assert buffer.feature_matrix(2).shape == (0, 2)
    pairs = [Observation(psi=[1.0, 2.0], y=3.0), Observation(psi=[0.0, 1.0], y=1.0)]
    buffer.append(_transition(0, 0, 1, 2), pairs)
    assert len(buffer) == 1
    assert buffer.feature_matrix(2).tolist() == [[1.0, 2.0], [0.0, 1.0]]
    assert buffer.targets().tolist() == [3.0, 1.0]


def test_buffer_rebuilds_the_live_posterior(small_env, small_agent):
    agent = agents.RafaAgent(small_env, small_agent)
    record = agent.run()
    assert len(agent.buffer) == small_agent.T
    assert np.allclose(agent.buffer.ridge_mean(agent.prior), agent.posterior.mean)
    assert record.rebuild_error < 1e-8


def test_each_step_regresses_value_and_successor_indicators(small_env, small_agent):
    agent = agents.RafaAgent(small_env, small_agent)
    agent.run()
    entry = agent.buffer.entries[0]
    s, a = entry.transition.state, entry.transition.action
    s_next = entry.transition.next_state
    assert len(entry.observations) == 1 + small_env.n_states
    indicators = entry.observations[1:]
    assert [obs.y for obs in indicators] == [
        float(j == s_next) for j in range(small_env.n_states)
    ]
    predicted = [obs.psi @ small_env.theta_star for obs in indicators]
    assert np.allclose(predicted, small_env.kernel[s, a])


def test_indicator_pairs_concentrate_the_sampled_kernel(small_env):
    base = config.AgentConfig(T=200, seed=2)
    value_only = agents.RafaAgent(
        small_env, base.model_copy(update={"indicator_targets": False})
    )
    with_indicators = agents.RafaAgent(small_env, base)
    value_only.run()
    with_indicators.run()
    visited = collections.Counter(
        (entry.transition.state, entry.transition.action)
        for entry in with_indicators.buffer.entries
    )
    (s, a), _ = visited.most_common(1)[0]
    kernel = dynamics.transition_kernel(small_env, with_indicators.posterior.mean)
    assert np.abs(kernel[s, a] - small_env.kernel[s, a]).max() < 0.25
    assert with_indicators.posterior.entropy() < value_only.posterior.entropy()


def test_posterior_sampling_beats_the_myopic_baseline_on_the_chain(chain_env):
    lookahead, myopic = 0.0, 0.0
    for seed in range(3):
        cfg = config.AgentConfig(T=400, seed=seed)
        lookahead += agents.run(chain_env, cfg).cumulative_regret
        myopic += agents.baseline_myopic(chain_env, cfg).cumulative_regret
    assert lookahead < 0.75 * myopic


def test_prior_of_wrong_dimension(small_env, small_agent):
    with pytest.raises(RafaError):
        agents.RafaAgent(small_env, small_agent, prior=GaussianPosterior.prior(2))


def test_planner_failure_aborts_the_run(small_env):
    cfg = config.AgentConfig(
        T=10, planner=config.PlannerConfig(kind="tree-search", max_rollouts=1)
    )
    with pytest.raises(RunAborted) as caught:
        agents.run(small_env, cfg)
    assert caught.value.step == 0
    assert caught.value.record.aborted


def test_disagreeing_triggers_are_a_contract_violation(small_env, monkeypatch):
    post = GaussianPosterior.prior(small_env.feature_dim)
    epoch = _epoch(small_env, post)
    monkeypatch.setattr(switching, "determinant_trigger", lambda epoch, post: True)
    with pytest.raises(ContractViolation):
        switching.should_switch(
            config.SwitchCondition(), epoch, post, _transition(0, 0, 0, 0)
        )
