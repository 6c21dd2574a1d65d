import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rafalab.errors import ConfigurationError, ContractViolation
from rafalab.posterior import (
    GaussianPosterior,
    Observation,
    entropy_budget,
    load_posterior,
    probabilistic_value_bound,
    regularity_coefficient,
    save_posterior,
)

features = st.lists(
    st.floats(-10, 10, allow_nan=False, allow_infinity=False), min_size=3, max_size=3
)


def _updated(rng, d=4, n=10, **kwargs):
    post = GaussianPosterior.prior(d, **kwargs)
    for _ in range(n):
        post = post.update(Observation(psi=rng.normal(size=d), y=float(rng.normal())))
    return post


def test_prior_entropy():
    post = GaussianPosterior.prior(3, lam=2.0)
    expected = 1.5 * (1 + math.log(2 * math.pi)) - 1.5 * math.log(2.0)
    assert post.entropy() == pytest.approx(expected)


def test_update_returns_a_new_posterior():
    prior = GaussianPosterior.prior(2)
    post = prior.update(Observation(psi=[1.0, 0.0], y=1.0))
    assert prior.n_updates == 0
    assert post.n_updates == 1
    assert np.array_equal(prior.precision, np.eye(2))


def test_mean_matches_ridge_solution(rng):
    design = rng.normal(size=(15, 4))
    targets = rng.normal(size=15)
    post = GaussianPosterior.prior(4, lam=0.5, noise_scale=2.0)
    for psi, y in zip(design, targets):
        post = post.update(Observation(psi=psi, y=y))
    ridge = np.linalg.solve(
        0.5 * np.eye(4) + design.T @ design / 4, design.T @ targets / 4
    )
    assert np.allclose(post.mean, ridge, rtol=1e-8, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(features)
def test_information_gain_is_the_entropy_drop(psi):
    post = GaussianPosterior.prior(3, lam=1.5)
    post = post.update(Observation(psi=[1.0, -1.0, 0.5], y=0.3))
    after = post.update(Observation(psi=psi, y=1.0))
    assert post.information_gain(psi) == pytest.approx(
        post.entropy() - after.entropy(), abs=1e-10
    )


def test_entropy_strictly_falls_on_nonzero_updates(rng):
    post = GaussianPosterior.prior(3)
    for _ in range(20):
        after = post.update(Observation(psi=rng.normal(size=3), y=0.0))
        assert after.entropy() < post.entropy()
        post = after


def test_zero_feature_carries_no_information():
    post = GaussianPosterior.prior(3)
    after = post.update(Observation(psi=np.zeros(3), y=5.0))
    assert post.information_gain(np.zeros(3)) == 0.0
    assert after.entropy() == pytest.approx(post.entropy())


def test_update_rejects_bad_observations():
    post = GaussianPosterior.prior(3)
    with pytest.raises(ContractViolation):
        post.update(Observation(psi=np.ones(2), y=0.0))
    with pytest.raises(ContractViolation):
        post.update(Observation(psi=np.ones(3), y=math.inf))


def test_concentrated_belief_samples_its_center(rng):
    theta = np.array([0.2, 0.3, 0.5])
    post = GaussianPosterior.concentrated(theta)
    assert np.allclose(post.sample(rng), theta, atol=1e-4)


def test_sample_covariance_is_the_inverse_precision(rng):
    post = _updated(rng, d=3, n=5)
    draws = post.sample(np.random.default_rng(1), 20_000)
    assert draws.shape == (20_000, 3)
    assert np.allclose(np.cov(draws.T), post.covariance, atol=0.05)


def test_bonus_formula():
    post = GaussianPosterior.prior(2)
    psi = np.array([1.0, 1.0])
    expected = math.sqrt(2) * 10.0 * math.sqrt(0.5 * math.log(3.0))
    assert post.bonus(psi, 10.0) == pytest.approx(expected)
    with pytest.raises(ContractViolation):
        post.bonus(psi, 0.0)


def test_fast_path_agrees_with_direct_solve(rng):
    fast = _updated(np.random.default_rng(3), fast=True)
    direct = _updated(np.random.default_rng(3))
    assert fast.logdet == pytest.approx(direct.logdet)
    assert np.allclose(fast.mean, direct.mean)
    assert fast.fast_path_error() < 1e-8


def test_audit_mode_rebuilds_precision(rng):
    post = _updated(rng, audit=True)
    assert len(post.observations) == 10
    assert np.allclose(post.recompute_precision(), post.precision)
    with pytest.raises(ContractViolation):
        _updated(rng).recompute_precision()


def test_determinant_ratio_bounds_the_feature_norm(rng):
    early = _updated(rng, n=3)
    late = early
    for _ in range(10):
        late = late.update(Observation(psi=rng.normal(size=4), y=0.0))
    ratio = math.exp(late.logdet - early.logdet)
    for _ in range(20):
        psi = rng.normal(size=4)
        bound = ratio * late.quadratic_form(psi) * (1 + 1e-9)
        assert early.quadratic_form(psi) <= bound


def test_entropy_budget():
    assert entropy_budget(4, 1.0, 1.0, 0, 2.0) == 0.0
    assert entropy_budget(4, 1.0, 1.0, 100, 2.0) == pytest.approx(2 * math.log(101))
    assert entropy_budget(4, 1.0, 1.0, 200, 2.0) > entropy_budget(4, 1.0, 1.0, 100, 2.0)


def test_regularity_coefficient():
    assert regularity_coefficient(1) == pytest.approx(1 / math.log(2))
    assert regularity_coefficient(75) == pytest.approx(75 / math.log(76))


def test_probabilistic_value_bound_checks_delta():
    assert probabilistic_value_bound(1.0, 1.0, 1.0, 2, 100, 0.1) > 0
    with pytest.raises(ContractViolation):
        probabilistic_value_bound(1.0, 1.0, 1.0, 2, 100, 1.0)


def test_posterior_snapshot_round_trip(rng, tmp_path):
    post = _updated(rng)
    path = str(tmp_path / "posterior.toml")
    save_posterior(post, path)
    loaded = load_posterior(path)
    assert np.array_equal(loaded.precision, post.precision)
    assert np.allclose(loaded.mean, post.mean)
    assert loaded.n_updates == 10


def test_posterior_snapshot_missing(tmp_path):
    with pytest.raises(ConfigurationError):
        load_posterior(str(tmp_path / "absent.toml"))


@pytest.mark.parametrize("fast", [False, True])
def test_batch_update_matches_sequential_updates(rng, fast):
    observations = [
        Observation(psi=rng.normal(size=4), y=float(rng.normal())) for _ in range(5)
    ]
    sequential = GaussianPosterior.prior(4, fast=fast)
    for obs in observations:
        sequential = sequential.update(obs)
    batch = GaussianPosterior.prior(4, fast=fast).update_many(observations)
    assert batch.n_updates == 5
    assert np.allclose(batch.precision, sequential.precision)
    assert np.allclose(batch.mean, sequential.mean)
    assert batch.logdet == pytest.approx(sequential.logdet)


@pytest.mark.parametrize("fast", [False, True])
def test_batch_gain_is_the_entropy_drop(rng, fast):
    before = _updated(rng, n=3, fast=fast)
    features = rng.normal(size=(3, 4))
    after = before.update_many([Observation(psi=psi, y=0.0) for psi in features])
    drop = before.entropy() - after.entropy()
    assert before.batch_information_gain(features) == pytest.approx(drop, rel=1e-9)
    assert before.batch_information_gain(features[:1]) == pytest.approx(
        before.information_gain(features[0])
    )


def test_empty_batch_leaves_the_posterior_alone():
    post = GaussianPosterior.prior(2)
    assert post.update_many([]) is post
