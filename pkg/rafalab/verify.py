"""Property suites behind `rafalab verify`.

Every check returns an `AuditCheck` whose slack is the smallest margin observed over
its trials; a negative margin is a violation.
"""
import itertools
import math
import os
import tempfile
from typing import Callable

import numpy as np
import structlog

import rafalab.agent.agents as agents
import rafalab.config as config
import rafalab.harness.audit as audit
import rafalab.mdp.data as mdp_data
import rafalab.mdp.dynamics as dynamics
import rafalab.mdp.setup as setup
import rafalab.mdp.storage as storage
import rafalab.planners.data as planner_data
import rafalab.planners.mcts as mcts
import rafalab.planners.search as search
import rafalab.planners.value_iteration as vi
from rafalab.errors import ConfigurationError
from rafalab.harness.regret import RegretOracle
from rafalab.posterior import GaussianPosterior, Observation, regularity_coefficient

logger = structlog.get_logger()

RIDGE_TOL = 1e-8
GAIN_TOL = 1e-10
REGRET_TOL = 1e-6
MC_SAMPLES = 10_000
HORIZON_GRID = list(itertools.product((0.5, 0.9, 0.99), (0.1, 0.01)))


def _tabular(rng: np.random.Generator, n_states: int, n_actions: int, gamma=0.9):
    gen_config = config.EnvironmentConfig(
        n_states=n_states, n_actions=n_actions, gamma=gamma
    )
    return setup.generate_environment(gen_config, rng)


def _random_model(
    rng: np.random.Generator, n_states: int, n_actions: int, gamma: float
) -> planner_data.PlanningModel:
    return planner_data.PlanningModel(
        kernel=rng.dirichlet(np.ones(n_states), size=(n_states, n_actions)),
        reward=rng.uniform(size=(n_states, n_actions)),
        gamma=gamma,
        value_bound=1.0 / (1.0 - gamma),
    )


def _deterministic_model(
    rng: np.random.Generator, n_states: int, n_actions: int, gamma: float = 0.9
) -> planner_data.PlanningModel:
    successors = rng.integers(n_states, size=(n_states, n_actions))
    kernel = np.zeros((n_states, n_actions, n_states))
    rows = np.indices((n_states, n_actions))
    kernel[rows[0], rows[1], successors] = 1.0
    return planner_data.PlanningModel(
        kernel=kernel,
        reward=rng.uniform(size=(n_states, n_actions)),
        gamma=gamma,
        value_bound=1.0 / (1.0 - gamma),
    )


def _random_updates(
    rng: np.random.Generator,
    d: int,
    n: int,
    lam: float = 1.0,
    fast: bool = False,
    keep_log: bool = False,
) -> list[GaussianPosterior]:
    """A chain of posteriors after n random updates, the prior first."""
    chain = [GaussianPosterior.prior(d, lam=lam, fast=fast, audit=keep_log)]
    for _ in range(n):
        obs = Observation(psi=rng.normal(size=d), y=float(rng.normal()))
        chain.append(chain[-1].update(obs))
    return chain


def _pass_fail(name: str, ok: bool, slack: float, detail: str) -> audit.AuditCheck:
    return audit.AuditCheck(
        name=name, status="pass" if ok else "fail", slack=slack, detail=detail
    )


# mdp


def kernel_projection(rng, trials):
    margins = []
    for _ in range(200 * trials):
        raw = rng.normal(size=(3, 2, 4))
        raw[0, 0] = -np.abs(raw[0, 0])
        kernel = dynamics.project_kernel(raw)
        margins.append(
            min(
                float(kernel.min()),
                1e-12 - float(np.abs(kernel.sum(axis=2) - 1.0).max()),
            )
        )
    return audit.verdict(
        "kernel_projection", np.array(margins), "rows are distributions;"
    )


def regret_nonneg(rng, trials):
    margins = []
    for _ in range(50 * trials):
        env = _tabular(rng, 3, 2)
        oracle = RegretOracle(env)
        for actions in itertools.product(range(env.n_actions), repeat=env.n_states):
            pi = mdp_data.Policy(actions=actions)
            margins.extend(
                oracle.instantaneous_regret(pi, s) + REGRET_TOL
                for s in range(env.n_states)
            )
    return audit.verdict("regret_nonneg", np.array(margins), "V* - V^pi >= 0;")


def single_state_regret(rng, trials):
    env = setup.from_tabular(np.ones((1, 2, 1)), np.array([[1.0, 0.0]]), 0.9)
    regret = RegretOracle(env).instantaneous_regret(mdp_data.Policy(actions=[1]), 0)
    error = abs(regret - 10.0)
    return _pass_fail(
        "single_state_regret", error <= REGRET_TOL, REGRET_TOL - error, f"{regret=}"
    )


def environment_round_trip(rng, trials):
    env = _tabular(rng, 3, 2)
    with tempfile.TemporaryDirectory() as directory:
        path = os.path.join(directory, "env.toml")
        storage.save_environment(env, path)
        loaded = storage.load_environment(path)
    same = all(
        np.array_equal(getattr(env, name), getattr(loaded, name))
        for name in ("phi", "theta_star", "reward", "rho")
    ) and (env.gamma, env.value_bound, env.feature_bound) == (
        loaded.gamma,
        loaded.value_bound,
        loaded.feature_bound,
    )
    return _pass_fail("environment_round_trip", same, 0.0, "saved and loaded fields")


# posterior


def ridge_match(rng, trials):
    margins = []
    for _ in range(1000 * trials):
        d = int(rng.integers(1, 7))
        lam = float(rng.uniform(0.1, 5.0))
        post = GaussianPosterior.prior(d, lam=lam)
        features, targets = [], []
        for _ in range(int(rng.integers(0, 12))):
            psi, y = rng.normal(size=d), float(rng.normal())
            post = post.update(Observation(psi=psi, y=y))
            features.append(psi)
            targets.append(y)
        design = np.array(features).reshape(-1, d)
        ridge = np.linalg.solve(
            lam * np.eye(d) + design.T @ design, design.T @ np.array(targets)
        )
        scale = max(float(np.linalg.norm(ridge)), 1.0)
        margins.append(RIDGE_TOL - float(np.linalg.norm(post.mean - ridge)) / scale)
    return audit.verdict("ridge_match", np.array(margins), "mean against dense ridge;")


def gain_chain(rng, trials):
    margins = []
    for _ in range(200 * trials):
        chain = _random_updates(rng, int(rng.integers(1, 7)), 10, keep_log=True)
        for before, after in zip(chain, chain[1:]):
            drop = before.entropy() - after.entropy()
            gain = before.information_gain(after.observations[-1].psi)
            margins.append(GAIN_TOL - abs(gain - drop))
    return audit.verdict("gain_chain", np.array(margins), "I = H_before - H_after;")


def entropy_decrease(rng, trials):
    margins = []
    for _ in range(200 * trials):
        chain = _random_updates(rng, int(rng.integers(1, 7)), 10)
        entropies = np.array([post.entropy() for post in chain])
        margins.extend(entropies[:-1] - entropies[1:])
    margins = np.array(margins)
    return audit.AuditCheck(
        name="entropy_decrease",
        status="pass" if np.all(margins > 0.0) else "fail",
        slack=float(margins.min()),
        detail="H strictly falls on nonzero updates",
    )


def fast_path(rng, trials):
    margins = []
    for _ in range(100 * trials):
        chain = _random_updates(rng, int(rng.integers(1, 7)), 20, fast=True)
        margins.append(RIDGE_TOL - chain[-1].fast_path_error())
    return audit.verdict("fast_path", np.array(margins), "rank-one mean against solve;")


def variance_contraction(rng, trials):
    """Var_θ[(B_θ V)(s,a)] <= 2L²·I(θ; ξ | D) on bounded one-hot instances."""
    margins = []
    for _ in range(200 * trials):
        env = _tabular(rng, 3, 2)
        value_bound = float(env.value_bound)
        bound = 1.0 + value_bound
        post = GaussianPosterior.prior(env.feature_dim, lam=float(env.n_states))
        for _ in range(int(rng.integers(0, 30))):
            s, a = int(rng.integers(env.n_states)), int(rng.integers(env.n_actions))
            v = rng.uniform(-value_bound, value_bound, size=env.n_states)
            psi = dynamics.value_feature(env, v, s, a)
            post = post.update(Observation(psi=psi, y=float(rng.uniform(-1, 1))))
        v = rng.uniform(-value_bound, value_bound, size=env.n_states)
        s, a = int(rng.integers(env.n_states)), int(rng.integers(env.n_actions))
        psi = dynamics.value_feature(env, v, s, a)
        backed_up = env.reward[s, a] + env.gamma * post.sample(rng, MC_SAMPLES) @ psi
        variance = float(backed_up.var(ddof=1))
        stderr = variance * math.sqrt(2.0 / (MC_SAMPLES - 1))
        limit = 2.0 * bound**2 * post.information_gain(psi)
        margins.append(limit + 3.0 * stderr - variance)
    return audit.verdict("variance_contraction", np.array(margins), "MC variance;")


def det_ratio_norm(rng, trials):
    """ψᵀΣ₁⁻¹ψ <= (det Σ₂ / det Σ₁)·ψᵀΣ₂⁻¹ψ for Σ₁ ⪯ Σ₂."""
    margins = []
    for _ in range(200 * trials):
        d = int(rng.integers(1, 7))
        chain = _random_updates(rng, d, int(rng.integers(1, 15)))
        early, late = chain[int(rng.integers(len(chain) - 1))], chain[-1]
        psi = rng.normal(size=d)
        ratio = math.exp(late.logdet - early.logdet)
        early_norm = early.quadratic_form(psi)
        margins.append(ratio * late.quadratic_form(psi) * (1 + 1e-9) - early_norm)
    return audit.verdict("det_ratio_norm", np.array(margins), "determinant ratio;")


def regularity_pairs(rng, trials):
    """I(·|D_early) <= 4η·I(·|D_late) while the entropy drop is at most log 2."""
    margins = []
    for _ in range(200 * trials):
        d = int(rng.integers(1, 7))
        eta = regularity_coefficient(d)
        chain = _random_updates(rng, d, int(rng.integers(1, 15)), lam=float(d))
        for early, late in itertools.combinations(chain, 2):
            if early.entropy() - late.entropy() > math.log(2.0):
                continue
            psi = rng.normal(size=d)
            margins.append(
                4.0 * eta * late.information_gain(psi) * (1 + 1e-9)
                - early.information_gain(psi)
            )
    return audit.verdict("regularity_pairs", np.array(margins), "eta = d/log(1+d);")


# planners


def horizon_certificate(rng, trials):
    margins = []
    for gamma, epsilon in HORIZON_GRID:
        for _ in range(100 * trials):
            model = _random_model(rng, 4, 3, gamma)
            horizon, _ = vi.required_horizon(gamma, epsilon, model.value_bound)
            result = vi.value_iteration(model, horizon)
            cap = min(epsilon, gamma ** (horizon - 1) * model.value_bound)
            margins.append(cap + 1e-12 - result.epsilon_certificate)
    return audit.verdict("horizon_certificate", np.array(margins), "residual <= eps;")


def _full_budget(n_actions: int, depth: int) -> planner_data.SearchBudget:
    return planner_data.SearchBudget(
        breadth=n_actions,
        depth=depth,
        proposal_width=n_actions,
        fan_out=1,
        expansions=n_actions**depth,
    )


def _weak_critic(
    rng: np.random.Generator, model: planner_data.PlanningModel, trial: int
) -> np.ndarray:
    """Zero on even trials, noise unrelated to V* on odd ones."""
    if trial % 2 == 0:
        return np.zeros(model.n_states)
    return rng.uniform(0.0, model.value_bound, size=model.n_states)


def planner_equivalence(rng, trials):
    mismatches = 0
    for trial in range(50 * trials):
        model = _deterministic_model(rng, 5, 3)
        critic_values = _weak_critic(rng, model, trial)
        budget = _full_budget(model.n_actions, 2)
        s0 = int(rng.integers(model.n_states))
        exhaustive = search.best_rollout(
            search.enumerate_rollouts(model, critic_values, s0, budget.depth)
        )
        tree, _ = search.tree_search(model, critic_values, s0, budget)
        beam, _ = search.beam_search(model, critic_values, s0, budget)
        if len({exhaustive.first_action, tree, beam}) != 1:
            mismatches += 1
    return _pass_fail(
        "planner_equivalence",
        mismatches == 0,
        -float(mismatches),
        "tree/beam/exhaustive, weak critic",
    )


def mcts_equivalence(rng, trials):
    mismatches = 0
    for trial in range(50 * trials):
        model = _deterministic_model(rng, 5, 3)
        critic_values = _weak_critic(rng, model, trial)
        budget = _full_budget(model.n_actions, 2)
        s0 = int(rng.integers(model.n_states))
        exhaustive = search.best_rollout(
            search.enumerate_rollouts(model, critic_values, s0, budget.depth)
        )
        first, _ = mcts.mcts(model, critic_values, s0, budget, rng)
        mismatches += int(first != exhaustive.first_action)
    return _pass_fail(
        "mcts_equivalence", mismatches == 0, -float(mismatches), "E = B^U, weak critic"
    )


def search_ordering(rng, trials):
    """Full tree >= beam of breadth 2 >= greedy rollout, compared by value."""
    margins = []
    equal = 0
    for _ in range(50 * trials):
        model = _random_model(rng, 5, 3, 0.9)
        critic_values = vi.critic(model, 50)
        s0 = int(rng.integers(model.n_states))
        full = _full_budget(model.n_actions, 2)
        narrow = planner_data.SearchBudget(breadth=2, depth=2, proposal_width=2)
        greedy = narrow.model_copy(update={"breadth": 1})
        _, tree = search.tree_search(model, critic_values, s0, full)
        _, beam = search.beam_search(model, critic_values, s0, narrow)
        _, climb = search.beam_search(model, critic_values, s0, greedy)
        margins.extend([tree.value - beam.value, beam.value - climb.value])
        equal += int(abs(tree.value - beam.value) <= 1e-12)
    check = audit.verdict(
        "search_ordering", np.array(margins) + 1e-12, "tree >= beam >= greedy;"
    )
    detail = f"{check.detail} beam equals tree {equal / (50 * trials):.2f}"
    return check.model_copy(update={"detail": detail})


def value_contraction(rng, trials):
    """One more backup shrinks the residual by at least γ."""
    margins = []
    for _ in range(50 * trials):
        gamma = float(rng.choice([0.5, 0.9, 0.99]))
        model = _random_model(rng, 4, 3, gamma)
        horizon = int(rng.integers(1, 30))
        before = vi.value_iteration(model, horizon).epsilon_certificate
        after = vi.value_iteration(model, horizon + 1).epsilon_certificate
        margins.append(gamma * before * (1 + 1e-9) + 1e-12 - after)
    return audit.verdict("value_contraction", np.array(margins), "residual ratio;")

# agent


def _agent_runs(rng, trials):
    env = _tabular(rng, 3, 2)
    for seed in range(2 * trials):
        for variant in ("rafa-ps", "rafa-bma", "rafa-bonus"):
            cfg = config.AgentConfig(variant=variant, T=300, seed=seed)
            yield env, cfg, agents.run(env, cfg)


def agent_audits(rng, trials) -> list[audit.AuditCheck]:
    reports = [audit.audit(record) for _, _, record in _agent_runs(rng, trials)]
    merged = []
    for name in [check.name for check in reports[0].checks]:
        found = [report.check(name) for report in reports]
        applicable = [check for check in found if check.status != "n/a"]
        slacks = [check.slack for check in applicable if check.slack is not None]
        merged.append(
            audit.AuditCheck(
                name=f"agent_{name}",
                status=(
                    "n/a"
                    if not applicable
                    else "fail"
                    if any(check.status == "fail" for check in applicable)
                    else "pass"
                ),
                slack=min(slacks) if slacks else None,
                detail=f"{len(applicable)} of {len(found)} runs applicable",
            )
        )
    return merged


def replay_determinism(rng, trials):
    env = _tabular(rng, 3, 2)
    cfg = config.AgentConfig(T=200, seed=int(rng.integers(1000)))
    first, second = agents.run(env, cfg), agents.run(env, cfg)
    same = first.model_dump_json() == second.model_dump_json()
    return _pass_fail("replay_determinism", same, 0.0, "records identical")


suites: dict[str, list[Callable]] = {
    "mdp": [
        kernel_projection,
        regret_nonneg,
        single_state_regret,
        environment_round_trip,
    ],
    "posterior": [
        ridge_match,
        gain_chain,
        entropy_decrease,
        fast_path,
        variance_contraction,
        det_ratio_norm,
        regularity_pairs,
    ],
    "planners": [
        horizon_certificate,
        value_contraction,
        planner_equivalence,
        mcts_equivalence,
        search_ordering,
    ],
    "agent": [agent_audits, replay_determinism],
}


def run_suites(
    only: list[str] | None = None, trials: int = 1, seed: int = 0
) -> list[audit.AuditCheck]:
    selected = only or list(suites)
    unknown = sorted(set(selected) - set(suites))
    if unknown:
        raise ConfigurationError(f"unknown verify suites {unknown}")
    checks: list[audit.AuditCheck] = []
    for offset, name in enumerate(suites):
        if name not in selected:
            continue
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(offset,)))
        for check in suites[name]:
            result = check(rng, trials)
            checks.extend(result if isinstance(result, list) else [result])
        logger.info("Verified suite.", suite=name)
    return checks
