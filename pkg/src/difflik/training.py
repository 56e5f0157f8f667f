"""Denoising score-matching training for the network score field.

The loss draws (t, eps) per batch element, forms the perturbed state
x_t = mean(t) + std(t) * eps through the SDE's closed-form kernel, and
regresses the model score onto the kernel score -eps/std with the weighting
lambda(t) = std(t)^2:

    loss = mean_i  std_i^2 * || s(x_t_i, t_i, c_i) + eps_i / std_i ||^2
         = mean_i  || raw_i + eps_i ||^2

where raw is the network output before the 1/std score scaling, so the
regression target is simply -eps and no near-zero division occurs.

Optimisation is stochastic gradient descent with momentum and global-norm
gradient clipping. Everything is driven by explicit seeds; identical seeds
give bit-identical parameter trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditions import NULL, Condition
from .errors import ContractError, TrainingError
from . import network as net
from .network import NetworkParams, ParamGrads
from .rng import stream
from .schedules import DEFAULT_T_MIN, int_beta
from .sde import SdeSpec


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    clip_norm: float = 10.0


@dataclass
class Batch:
    """Training examples. ``mrvp_means`` supplies a per-sample reversion
    target for mean-reverting SDEs (defaults to the SDE's condition mean)."""

    x0: np.ndarray
    conditions: list
    mrvp_means: np.ndarray | None = None


def _condition_matrix(params: NetworkParams, conditions):
    """Stack per-sample condition vectors; returns (matrix, embedding rows)."""
    vecs = np.zeros((len(conditions), params.cond_dim))
    idx = np.full(len(conditions), -1)
    for i, c in enumerate(conditions):
        vecs[i] = net.condition_vector(params, c)
        if c.kind == "class":
            idx[i] = c.label
    return vecs, idx


def dsm_loss(
    params: NetworkParams,
    batch: Batch,
    sde: SdeSpec,
    rng: np.random.Generator,
    t_min: float = DEFAULT_T_MIN,
):
    """Denoising score-matching loss and its parameter gradients."""
    x0 = np.atleast_2d(np.asarray(batch.x0, dtype=float))
    n = x0.shape[0]
    if n == 0:
        raise ContractError("empty batch")
    if len(batch.conditions) != n:
        raise ContractError("one condition per sample required")

    T = sde.schedule.terminal_time
    t = rng.uniform(t_min, T, n)
    eps = rng.standard_normal(x0.shape)

    if sde.variant == "ddim_sigma":
        from .schedules import ddim_sigma

        std = np.asarray(ddim_sigma(sde.schedule, t))
        mean = x0
    else:
        B = np.asarray(int_beta(sde.schedule, t))
        coeff = np.exp(-0.5 * B)
        std = np.sqrt(-np.expm1(-B))
        if sde.variant == "vp":
            mean = coeff[:, None] * x0
        else:
            mu = batch.mrvp_means
            mu = sde.condition_mean if mu is None else np.atleast_2d(np.asarray(mu, dtype=float))
            mean = mu + coeff[:, None] * (x0 - mu)
    x_t = mean + std[:, None] * eps

    cond_vecs, embed_idx = _condition_matrix(params, batch.conditions)
    raw, cache = net.forward_cached(params, x_t, t, cond_vecs)
    residual = raw + eps
    loss = float(np.mean(np.sum(residual * residual, axis=1)))
    grads = net.backward_params(params, cache, 2.0 * residual / n, embed_idx)
    return loss, grads


def _global_norm(grads: ParamGrads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.arrays())))


def train(
    params: NetworkParams,
    x0: np.ndarray,
    conditions: list,
    sde: SdeSpec,
    optimizer: OptimizerConfig,
    steps: int,
    batch_size: int,
    seed: int,
    cond_dropout: float = 0.1,
    mrvp_means: np.ndarray | None = None,
    t_min: float = DEFAULT_T_MIN,
):
    """SGD with momentum on the score-matching loss.

    Conditions are replaced by the unconditional token with probability
    ``cond_dropout`` per example per step, so guided evaluation has an
    unconditional branch to mix with. Returns (trained params, per-step
    losses); the inputs are never mutated.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    n = x0.shape[0]
    if n == 0:
        raise ContractError("empty dataset")
    params = params.copy()
    velocity = [np.zeros_like(a) for a in params.arrays()]
    batches = stream(seed, "train", "batches")
    noise = stream(seed, "train", "noise")
    drop = stream(seed, "train", "dropout")
    losses = np.zeros(steps)

    for step in range(steps):
        idx = batches.integers(0, n, size=batch_size)
        conds = [conditions[i] for i in idx]
        if cond_dropout > 0:
            mask = drop.random(batch_size) < cond_dropout
            conds = [NULL if m else c for m, c in zip(mask, conds)]
        means = None if mrvp_means is None else mrvp_means[idx]
        loss, grads = dsm_loss(params, Batch(x0[idx], conds, means), sde, noise, t_min)
        if not np.isfinite(loss):
            raise TrainingError(f"loss diverged at step {step}", step=step)
        losses[step] = loss

        gn = _global_norm(grads)
        scale = optimizer.clip_norm / gn if gn > optimizer.clip_norm else 1.0
        for buf, p, g in zip(velocity, params.arrays(), grads.arrays()):
            buf *= optimizer.momentum
            buf += scale * g
            p -= optimizer.learning_rate * buf
    return params, losses


def zero_model_baseline(dim: int, seed: int, num_draws: int = 10_000) -> float:
    """Monte-Carlo estimate of the all-zero score model's loss.

    With the std^2 weighting the zero model's per-sample loss is ||eps||^2,
    so the baseline is the mean squared norm of a standard normal draw
    (expectation: the data dimension).
    """
    rng = stream(seed, "zero_baseline")
    eps = rng.standard_normal((num_draws, dim))
    return float(np.mean(np.sum(eps * eps, axis=1)))
