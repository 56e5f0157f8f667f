"""Diffusion SDE variants, their closed-form marginals, and the prior.

Three variants share one schedule abstraction:

``vp``
    dx = -1/2 beta(t) x dt + sqrt(beta(t)) dW. The marginal of x_t given
    x_0 is Gaussian with mean x_0 * exp(-B(t)/2) and variance 1 - exp(-B(t)),
    so unit-variance data stays unit-variance for all t.

``mrvp``
    Mean-reverting variant: dx = 1/2 (mu - x) beta(t) dt + sqrt(beta(t)) dW,
    where mu is a fixed condition mean (the signal the process reverts to).
    Substituting y = x - mu reduces it to ``vp``, so the marginal mean is
    mu + (x_0 - mu) * exp(-B(t)/2) with the same variance, and the terminal
    distribution is N(mu, I) rather than N(0, I).

``ddim_sigma``
    The sigma-parameterised deterministic field (see flows); it has no
    drift/diffusion pair here. Its perturbation kernel is the
    variance-exploding bridge x_t = x_0 + sigma(t) * eps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError
from .schedules import NoiseSchedule, beta, int_beta, ddim_sigma

SDE_VARIANTS = ("vp", "mrvp", "ddim_sigma")


@dataclass(frozen=True)
class SdeSpec:
    """An SDE variant bound to a schedule (and, for mrvp, a condition mean)."""

    variant: str
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    condition_mean: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in SDE_VARIANTS:
            raise ConfigurationError(
                f"unknown SDE variant {self.variant!r}; expected one of {SDE_VARIANTS}"
            )
        if self.variant == "mrvp":
            if self.condition_mean is None:
                raise ConfigurationError("mrvp requires a condition_mean")
            object.__setattr__(
                self, "condition_mean", np.asarray(self.condition_mean, dtype=float).ravel()
            )
        elif self.condition_mean is not None:
            raise ConfigurationError(f"{self.variant} does not take a condition_mean")


def drift(sde: SdeSpec, x, t):
    """Forward drift f(x, t). Defined for vp/mrvp only."""
    x = np.asarray(x, dtype=float)
    b = beta(sde.schedule, t)
    if sde.variant == "vp":
        return -0.5 * b * x
    if sde.variant == "mrvp":
        return 0.5 * b * (sde.condition_mean - x)
    raise ContractError("ddim_sigma defines a deterministic field, not an SDE drift")


def diffusion(sde: SdeSpec, t):
    """Diffusion coefficient g(t) = sqrt(beta(t)). Defined for vp/mrvp only."""
    if sde.variant == "ddim_sigma":
        raise ContractError("ddim_sigma defines a deterministic field, not an SDE diffusion")
    return np.sqrt(beta(sde.schedule, t))


@dataclass(frozen=True)
class MarginalKernel:
    """Closed-form perturbation kernel: x_t = mean_offset + mean_coeff*x_0 + std*eps.

    mean_offset is zero for vp and ddim_sigma; for mrvp it is
    (1 - mean_coeff) * mu so the mean interpolates from x_0 to mu.
    """

    mean_coeff: float
    mean_offset: np.ndarray | float
    std: float

    def mean(self, x0):
        return self.mean_offset + self.mean_coeff * np.asarray(x0, dtype=float)

    def sample(self, x0, rng: np.random.Generator):
        x0 = np.asarray(x0, dtype=float)
        return self.mean(x0) + self.std * rng.standard_normal(x0.shape)


def marginal(sde: SdeSpec, t) -> MarginalKernel:
    """Perturbation kernel of x_t given x_0 at time t."""
    if sde.variant == "ddim_sigma":
        return MarginalKernel(mean_coeff=1.0, mean_offset=0.0, std=float(ddim_sigma(sde.schedule, t)))
    B = int_beta(sde.schedule, t)
    coeff = float(np.exp(-0.5 * B))
    std = float(np.sqrt(-np.expm1(-B)))
    if sde.variant == "vp":
        return MarginalKernel(mean_coeff=coeff, mean_offset=0.0, std=std)
    return MarginalKernel(mean_coeff=coeff, mean_offset=(1.0 - coeff) * sde.condition_mean, std=std)


@dataclass(frozen=True)
class Prior:
    """Identity-covariance Gaussian reference distribution at t = T."""

    mean: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).ravel())

    @property
    def dim(self) -> int:
        return self.mean.size


def prior_for(sde: SdeSpec, dim: int) -> Prior:
    """Terminal distribution of the SDE: N(0, I) for vp, N(mu, I) for mrvp.

    The sigma-parameterised variant has an unbounded terminal scale that an
    identity-covariance prior cannot represent, so it has no prior here (and
    hence no likelihood path).
    """
    if sde.variant == "vp":
        return Prior(np.zeros(dim))
    if sde.variant == "mrvp":
        if sde.condition_mean.size != dim:
            raise ContractError(
                f"condition_mean has dim {sde.condition_mean.size}, data has dim {dim}"
            )
        return Prior(sde.condition_mean)
    raise ConfigurationError("ddim_sigma has no identity-covariance terminal distribution")


def prior_logp(prior: Prior, x):
    """Log density of x under N(mean, I). x may be (d,) or (n, d)."""
    x = np.asarray(x, dtype=float)
    sq = np.sum((x - prior.mean) ** 2, axis=-1)
    d = prior.dim
    return -0.5 * d * np.log(2.0 * np.pi) - 0.5 * sq


def prior_sample(prior: Prior, n: int, rng: np.random.Generator):
    """n draws from the prior, shape (n, d)."""
    return prior.mean + rng.standard_normal((n, prior.dim))
