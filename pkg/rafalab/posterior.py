"""Conjugate Gaussian belief over θ for value-targeted regression.

The belief is N(θ̂, Σ⁻¹) with precision Σ = λI + Σᵢ ψᵢψᵢᵀ/σ² and θ̂ = Σ⁻¹ Σᵢ ψᵢyᵢ/σ².
Updates return a new posterior; a posterior is never modified in place.
"""
from __future__ import annotations

import math
import os
from typing import Sequence

import numpy as np
import scipy.linalg
import toml
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator

from rafalab.errors import ConfigurationError, ContractViolation, NumericalError

POSTERIOR_FORMAT = "rafalab-posterior"
FORMAT_VERSION = 1
# Sherman-Morrison path must agree with the direct solve to this relative error
FAST_PATH_TOL = 1e-8


class Observation(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    psi: np.ndarray = Field(description="ψ_{V_t}(s_t, a_t)")
    y: float = Field(description="V_t(s_{t+1})")

    @field_validator("psi", mode="before")
    @classmethod
    def _as_array(cls, value):
        array = np.array(value, dtype=float)
        array.setflags(write=False)
        return array


class GaussianPosterior(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    d: int = Field(ge=1)
    lam: float = Field(gt=0.0, description="Prior precision scale λ.")
    noise_scale: float = Field(default=1.0, gt=0.0, description="Observation σ.")
    precision: np.ndarray
    xty: np.ndarray
    n_updates: int = 0
    fast: bool = Field(
        default=False, description="Track Σ⁻¹ by Sherman-Morrison updates."
    )
    audit: bool = Field(default=False, description="Keep the observation log.")
    observations: tuple[Observation, ...] = ()
    covariance_track: np.ndarray | None = None
    logdet_track: float | None = None

    _chol: np.ndarray | None = PrivateAttr(default=None)

    @classmethod
    def prior(
        cls,
        d: int,
        lam: float = 1.0,
        noise_scale: float = 1.0,
        fast: bool = False,
        audit: bool = False,
    ) -> GaussianPosterior:
        return cls(
            d=d,
            lam=lam,
            noise_scale=noise_scale,
            precision=lam * np.eye(d),
            xty=np.zeros(d),
            fast=fast,
            audit=audit,
            covariance_track=np.eye(d) / lam if fast else None,
            logdet_track=d * math.log(lam) if fast else None,
        )

    @classmethod
    def concentrated(
        cls, theta: np.ndarray, scale: float = 1e12, noise_scale: float = 1.0
    ) -> GaussianPosterior:
        """A near-Dirac belief at theta."""
        theta = np.asarray(theta, dtype=float)
        return cls(
            d=len(theta),
            lam=scale,
            noise_scale=noise_scale,
            precision=scale * np.eye(len(theta)),
            xty=scale * theta,
        )

    def _check(self, obs: Observation) -> None:
        if obs.psi.shape != (self.d,):
            raise ContractViolation(
                f"psi has shape {obs.psi.shape}, expected ({self.d},)"
            )
        if not (np.all(np.isfinite(obs.psi)) and math.isfinite(obs.y)):
            raise ContractViolation("observation must be finite")

    def update(self, obs: Observation) -> GaussianPosterior:
        return self.update_many([obs])

    def update_many(self, observations: Sequence[Observation]) -> GaussianPosterior:
        """One posterior after conditioning on every observation in turn."""
        for obs in observations:
            self._check(obs)
        if not observations:
            return self
        design = np.stack([obs.psi for obs in observations])
        targets = np.array([obs.y for obs in observations])
        scaled = design / self.noise_scale**2
        changes: dict = {
            "precision": self.precision + design.T @ scaled,
            "xty": self.xty + scaled.T @ targets,
            "n_updates": self.n_updates + len(observations),
        }
        if self.audit:
            changes["observations"] = self.observations + tuple(observations)
        if self.fast:
            covariance, logdet = self.covariance_track, self.logdet_track
            for psi in design:
                cov_psi = covariance @ psi
                quad = float(psi @ cov_psi)
                covariance = covariance - np.outer(cov_psi, cov_psi) / (
                    self.noise_scale**2 + quad
                )
                logdet += math.log1p(quad / self.noise_scale**2)
            changes["covariance_track"] = covariance
            changes["logdet_track"] = logdet
        fields = {name: getattr(self, name) for name in type(self).model_fields}
        return type(self)(**(fields | changes))

    def model_post_init(self, __context) -> None:
        self.precision.setflags(write=False)
        self.xty.setflags(write=False)

    @property
    def cholesky(self) -> np.ndarray:
        """Lower factor L with LLᵀ = Σ."""
        if self._chol is None:
            try:
                self._chol = scipy.linalg.cholesky(self.precision, lower=True)
            except np.linalg.LinAlgError as error:
                raise NumericalError(
                    f"precision is not positive definite after {self.n_updates} updates"
                ) from error
        return self._chol

    @property
    def logdet(self) -> float:
        if self.fast:
            return float(self.logdet_track)
        return float(2.0 * np.sum(np.log(np.diag(self.cholesky))))

    @property
    def mean(self) -> np.ndarray:
        if self.fast:
            return self.covariance_track @ self.xty
        return scipy.linalg.cho_solve((self.cholesky, True), self.xty)

    @property
    def covariance(self) -> np.ndarray:
        if self.fast:
            return self.covariance_track.copy()
        return scipy.linalg.cho_solve((self.cholesky, True), np.eye(self.d))

    def entropy(self) -> float:
        """Differential entropy of N(θ̂, Σ⁻¹); falls as data arrives."""
        return 0.5 * self.d * (1.0 + math.log(2.0 * math.pi)) - 0.5 * self.logdet

    def quadratic_form(self, psi: np.ndarray) -> float:
        """ψᵀΣ⁻¹ψ."""
        psi = np.asarray(psi, dtype=float)
        if self.fast:
            return float(psi @ self.covariance_track @ psi)
        half = scipy.linalg.solve_triangular(self.cholesky, psi, lower=True)
        return float(half @ half)

    def information_gain(self, psi: np.ndarray) -> float:
        return 0.5 * math.log1p(self.quadratic_form(psi) / self.noise_scale**2)

    def batch_information_gain(self, features: np.ndarray) -> float:
        """½·log det(I + ΨΣ⁻¹Ψᵀ/σ²) for the rows Ψ of `features`."""
        features = np.atleast_2d(np.asarray(features, dtype=float))
        if features.shape[0] == 1:
            return self.information_gain(features[0])
        if self.fast:
            gram = features @ self.covariance_track @ features.T
        else:
            half = scipy.linalg.solve_triangular(
                self.cholesky, features.T, lower=True
            )
            gram = half.T @ half
        inner = np.eye(len(features)) + gram / self.noise_scale**2
        _, logdet = np.linalg.slogdet(inner)
        return 0.5 * float(logdet)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """θ = θ̂ + L⁻ᵀz, so Cov θ = (LLᵀ)⁻¹ = Σ⁻¹.

        With `size` the draws come back as rows of a (size, d) array.
        """
        z = rng.standard_normal(self.d if size is None else (self.d, size))
        offset = scipy.linalg.solve_triangular(self.cholesky, z, lower=True, trans="T")
        if size is None:
            return self.mean + offset
        return (self.mean[:, None] + offset).T

    def bma_parameter(self) -> np.ndarray:
        return self.mean

    def bonus(self, psi: np.ndarray, value_bound: float) -> float:
        if value_bound <= 0:
            raise ContractViolation("value bound must be positive")
        return math.sqrt(2.0) * value_bound * math.sqrt(self.information_gain(psi))

    def recompute_precision(self) -> np.ndarray:
        """Σ rebuilt from the observation log of an audit-mode posterior."""
        if not self.audit:
            raise ContractViolation("the observation log is only kept in audit mode")
        precision = self.lam * np.eye(self.d)
        for obs in self.observations:
            precision += np.outer(obs.psi, obs.psi) / self.noise_scale**2
        return precision

    def fast_path_error(self) -> float:
        """Relative gap between the Sherman-Morrison mean and a direct solve."""
        if not self.fast:
            return 0.0
        direct = scipy.linalg.solve(self.precision, self.xty, assume_a="pos")
        scale = max(float(np.linalg.norm(direct)), 1.0)
        return float(np.linalg.norm(self.mean - direct)) / scale


def entropy_budget(
    d: int, lam: float, noise_scale: float, horizon: int, feature_bound: float
) -> float:
    """Upper bound on H_0 − H_T after `horizon` updates with ‖ψ‖ ≤ feature_bound."""
    spread = horizon * feature_bound**2 / (d * noise_scale**2)
    return 0.5 * d * math.log(lam + spread) - 0.5 * d * math.log(lam)


def regularity_coefficient(d: int) -> float:
    return d / math.log1p(d)


def probabilistic_value_bound(
    feature_bound: float, mu_norm: float, lam: float, d: int, horizon: int, delta: float
) -> float:
    """Value bound holding jointly for `horizon` value functions w.p. 1 − delta."""
    if not 0.0 < delta < 1.0:
        raise ContractViolation("delta must lie inside (0, 1)")
    return (
        math.sqrt(2.0 * math.log(2.0 * horizon / delta))
        + feature_bound * mu_norm
        + feature_bound * math.sqrt(2.0 * lam * d * math.log(2.0 * d * horizon / delta))
    )


def save_posterior(post: GaussianPosterior, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    snapshot = {
        "format": POSTERIOR_FORMAT,
        "version": FORMAT_VERSION,
        "d": post.d,
        "lam": post.lam,
        "noise_scale": post.noise_scale,
        "n_updates": post.n_updates,
        "precision": post.precision.tolist(),
        "xty": post.xty.tolist(),
    }
    with open(file=path, mode="w") as fp:
        toml.dump(snapshot, fp)


def load_posterior(path: str) -> GaussianPosterior:
    try:
        with open(file=path, mode="r") as fp:
            raw = toml.load(fp)
    except (OSError, toml.TomlDecodeError) as error:
        raise ConfigurationError(f"can not read posterior {path}: {error}") from error
    if raw.get("format") != POSTERIOR_FORMAT or raw.get("version") != FORMAT_VERSION:
        raise ConfigurationError(f"{path} is not a rafalab posterior snapshot")
    return GaussianPosterior(
        d=raw["d"],
        lam=raw["lam"],
        noise_scale=raw["noise_scale"],
        n_updates=raw["n_updates"],
        precision=np.array(raw["precision"], dtype=float),
        xty=np.array(raw["xty"], dtype=float),
    )
