"""Score fields: analytic oracles, the trained network, and guidance mixing.

A score field evaluates s(x, t, c) ~= grad_x log p_t(x | c), where p_t is
the data distribution pushed through the SDE's perturbation kernel. Three
implementations:

``AnalyticGaussian``
    Data N(mean, diag(var)). The time-t marginal is Gaussian with mean
    kernel.mean(mean) and per-coordinate variance var*coeff^2 + std^2, so
    the score is exact: (mean_t - x)/var_t. The density does not depend on
    the condition, so conditional and unconditional scores coincide.

``AnalyticGmm``
    Data sum_k w_k N(m_k, v I) with a shared isotropic component variance.
    Each component pushes forward independently; the mixture score is the
    responsibility-weighted sum of component scores. A class-label
    condition restricts the mixture to that component (the class-conditional
    density); the null condition gives the full mixture.

``Mlp``
    A trained network in the noise-prediction parameterisation: the raw
    network output estimates -eps for x_t = mean + std*eps, and the score
    is raw / std(t). Conditions are embedded by the network (see network
    module).

Input-Jacobian contractions (``score_vjp``) are closed-form for the
analytic fields (the Jacobian is the Hessian of log p_t) and reverse
accumulation for the network.

Guided evaluation mixes conditional and unconditional outputs,
``s_u + omega * (s_c - s_u)``. The endpoints are short-circuited so
omega = 0 returns the unconditional and omega = 1 the conditional result
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .conditions import NULL, Condition
from .errors import ConfigurationError, ContractError, DomainError
from . import network as net
from .network import NetworkParams
from .sde import SdeSpec, marginal


@dataclass(frozen=True)
class AnalyticGaussian:
    """Gaussian data with diagonal covariance."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).ravel())
        object.__setattr__(self, "var", np.asarray(self.var, dtype=float).ravel())
        if self.var.size == 1:
            object.__setattr__(self, "var", np.full(self.mean.size, float(self.var)))
        if self.var.shape != self.mean.shape:
            raise ConfigurationError(f"var shape {self.var.shape} != mean shape {self.mean.shape}")
        if np.any(self.var <= 0):
            raise ConfigurationError("variances must be positive")

    @property
    def dim(self):
        return self.mean.size


@dataclass(frozen=True)
class AnalyticGmm:
    """Isotropic Gaussian mixture data with shared component variance."""

    means: np.ndarray
    weights: np.ndarray
    var: float

    def __post_init__(self):
        object.__setattr__(self, "means", np.atleast_2d(np.asarray(self.means, dtype=float)))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float).ravel())
        if self.weights.size != self.means.shape[0]:
            raise ConfigurationError("one weight per component required")
        if np.any(self.weights <= 0) or not np.isclose(self.weights.sum(), 1.0):
            raise ConfigurationError("weights must be positive and sum to 1")
        if not self.var > 0:
            raise ConfigurationError("component variance must be positive")

    @property
    def dim(self):
        return self.means.shape[1]


@dataclass(frozen=True)
class Mlp:
    params: NetworkParams

    @property
    def dim(self):
        return self.params.data_dim


@dataclass(frozen=True)
class ScoreField:
    implementation: AnalyticGaussian | AnalyticGmm | Mlp
    sde: SdeSpec

    @property
    def dim(self):
        return self.implementation.dim


@dataclass(frozen=True)
class GuidanceConfig:
    """Guidance scale; 0 = unconditional field, 1 = conditional field."""

    omega: float = 1.0

    def __post_init__(self):
        if not self.omega >= 0:
            raise ConfigurationError(f"guidance scale must be >= 0, got {self.omega}")


def _check_dims(field: ScoreField, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != field.dim:
        raise ContractError(f"x has dim {x.shape[-1]}, field expects {field.dim}")
    return x


def _kernel_std(field: ScoreField, t):
    kern = marginal(field.sde, t)
    if kern.std == 0.0:
        raise DomainError("score is undefined at t = 0; evaluate at t >= t_min")
    return kern, kern.std


def _gmm_components(impl: AnalyticGmm, field: ScoreField, t, c: Condition):
    """Pushed-forward component means/weights restricted by the condition."""
    kern, _ = _kernel_std(field, t)
    means_t = kern.mean(impl.means)
    var_t = impl.var * kern.mean_coeff**2 + kern.std**2
    if c.is_null:
        return means_t, impl.weights, var_t
    if c.kind == "class":
        if not 0 <= c.label < impl.means.shape[0]:
            raise ContractError(f"class label {c.label} out of range")
        return means_t[c.label : c.label + 1], np.ones(1), var_t
    raise ContractError(f"analytic mixture supports null/class conditions, got {c.kind!r}")


def _gmm_responsibilities(x, means_t, weights, var_t):
    """Posterior component weights at x; x (n, d), means_t (K, d) -> (n, K)."""
    diff = x[:, None, :] - means_t[None, :, :]
    logits = np.log(weights)[None, :] - 0.5 * np.sum(diff * diff, axis=-1) / var_t
    logits -= logits.max(axis=1, keepdims=True)
    g = np.exp(logits)
    return g / g.sum(axis=1, keepdims=True)


def score_eval(field: ScoreField, x, t, c: Condition = NULL):
    """Score of the time-t marginal at x; x (d,) or (n, d), matching output."""
    x = _check_dims(field, x)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    impl = field.implementation

    if isinstance(impl, AnalyticGaussian):
        kern, _ = _kernel_std(field, t)
        mean_t = kern.mean(impl.mean)
        var_t = impl.var * kern.mean_coeff**2 + kern.std**2
        out = (mean_t - xb) / var_t
    elif isinstance(impl, AnalyticGmm):
        means_t, weights, var_t = _gmm_components(impl, field, t, c)
        resp = _gmm_responsibilities(xb, means_t, weights, var_t)
        u = (means_t[None, :, :] - xb[:, None, :]) / var_t
        out = np.einsum("nk,nkd->nd", resp, u)
    else:
        _, std = _kernel_std(field, t)
        cond_vec = net.condition_vector(impl.params, c)
        out = np.atleast_2d(net.forward(impl.params, xb, t, cond_vec)) / std
    return out[0] if single else out


def score_vjp(field: ScoreField, x, t, c: Condition = NULL, v=None):
    """Row contraction v @ (d s / d x) at a single point x.

    ``v`` may be one vector (d,) or a stack (k, d); the output matches.
    Closed form for analytic fields, reverse accumulation for the network.
    """
    x = _check_dims(field, x)
    if x.ndim != 1:
        raise ContractError("score_vjp evaluates one point at a time")
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != field.dim:
        raise ContractError(f"v has dim {v.shape[-1]}, field expects {field.dim}")
    impl = field.implementation

    if isinstance(impl, AnalyticGaussian):
        kern, _ = _kernel_std(field, t)
        var_t = impl.var * kern.mean_coeff**2 + kern.std**2
        return -v / var_t

    if isinstance(impl, AnalyticGmm):
        means_t, weights, var_t = _gmm_components(impl, field, t, c)
        resp = _gmm_responsibilities(x[None, :], means_t, weights, var_t)[0]
        u = (means_t - x[None, :]) / var_t  # (K, d)
        s = resp @ u
        # Jacobian = sum_k resp_k u_k u_k^T - s s^T - I/var_t (Hessian of log p_t)
        vu = v @ u.T  # (..., K)
        return (vu * resp) @ u - np.outer(v @ s, s).reshape(v.shape) - v / var_t

    _, std = _kernel_std(field, t)
    cond_vec = net.condition_vector(impl.params, c)
    _, cache = net.forward_cached(impl.params, x, t, cond_vec)
    cot = np.atleast_2d(v)
    out = net.backward_input(impl.params, cache, cot) / std
    return out[0] if v.ndim == 1 else out


def cfg_score(field: ScoreField, x, t, c: Condition, g: GuidanceConfig):
    """Guided score s_u + omega (s_c - s_u); exact at the omega in {0, 1} endpoints."""
    if c.is_null:
        raise ContractError("guidance of the null condition is undefined")
    if g.omega == 0.0:
        return score_eval(field, x, t, NULL)
    if g.omega == 1.0:
        return score_eval(field, x, t, c)
    s_u = score_eval(field, x, t, NULL)
    s_c = score_eval(field, x, t, c)
    return s_u + g.omega * (s_c - s_u)


def cfg_score_vjp(field: ScoreField, x, t, c: Condition, g: GuidanceConfig, v):
    """Input-Jacobian contraction of the guided score; mirrors cfg_score."""
    if c.is_null:
        raise ContractError("guidance of the null condition is undefined")
    if g.omega == 0.0:
        return score_vjp(field, x, t, NULL, v)
    if g.omega == 1.0:
        return score_vjp(field, x, t, c, v)
    j_u = score_vjp(field, x, t, NULL, v)
    j_c = score_vjp(field, x, t, c, v)
    return j_u + g.omega * (j_c - j_u)
