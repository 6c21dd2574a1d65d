import numpy as np

from rafalab.posterior import GaussianPosterior, Observation


class RewardModel:
    """Conjugate linear model of the reward table with one-hot (s, a) features."""

    def __init__(self, n_states: int, n_actions: int, lam: float, noise_scale: float):
        self.shape = (n_states, n_actions)
        self.posterior = GaussianPosterior.prior(
            n_states * n_actions, lam=lam, noise_scale=noise_scale
        )

    def update(self, s: int, a: int, r: float) -> None:
        psi = np.zeros(self.posterior.d)
        psi[np.ravel_multi_index((s, a), self.shape)] = 1.0
        self.posterior = self.posterior.update(Observation(psi=psi, y=r))

    def estimate(self, rng: np.random.Generator | None = None) -> np.ndarray:
        """Posterior mean, or one draw when a generator is given, clipped to [0, 1]."""
        theta = (
            self.posterior.bma_parameter()
            if rng is None
            else self.posterior.sample(rng)
        )
        return np.clip(theta.reshape(self.shape), 0.0, 1.0)
