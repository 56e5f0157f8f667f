"""Deterministic flow fields and samplers.

``FlowField`` assembles the right-hand side that transports samples between
the data distribution (t ~ 0) and the terminal Gaussian (t = T):

    vp          dx/dt = -1/2 beta(t) (x + s(x, t, c))
    mrvp        dx/dt =  1/2 beta(t) ((mu - x) - s(x, t, c))
    ddim_sigma  dx/dt = s(x / sqrt(sigma(t)^2 + 1), t, c) * dsigma/dt

where s is the (optionally guidance-mixed) score field. The sigma-time
field is converted to t-time through the chain rule so one solver serves
all variants.

``velocity_vjp`` contracts a cotangent with the spatial Jacobian of the
velocity; for vp and mrvp the drift contributes -1/2 beta(t) I, so both
reduce to -1/2 beta(t) (v + v @ ds/dx).

The stochastic sampler discretises the reverse-time SDE
dx = [f - g^2 s] dt + g dW with Euler-Maruyama, drawing each Wiener
increment as sqrt(|dt|) * N(0, I).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .conditions import NULL, Condition
from .errors import ConfigurationError, ContractError, NumericalError
from .rng import stream
from .schedules import beta, ddim_sigma, ddim_sigma_prime
from .scores import GuidanceConfig, ScoreField, cfg_score, cfg_score_vjp, score_eval, score_vjp
from .sde import SdeSpec, diffusion, drift
from .solvers import EulerFixed, SolverConfig, Trajectory, integrate


@dataclass(frozen=True)
class FlowField:
    """A score field bound to an SDE, a condition, and optional guidance."""

    sde: SdeSpec
    score: ScoreField
    condition: Condition = NULL
    guidance: GuidanceConfig | None = None

    def __post_init__(self):
        if self.score.sde != self.sde:
            raise ConfigurationError("score field and flow field must share the same SDE")
        if self.guidance is not None and self.condition.is_null:
            raise ContractError("guidance requires a non-null condition")

    @property
    def dim(self):
        return self.score.dim

    def _score(self, x, t):
        if self.guidance is not None:
            return cfg_score(self.score, x, t, self.condition, self.guidance)
        return score_eval(self.score, x, t, self.condition)

    def _score_vjp(self, x, t, v):
        if self.guidance is not None:
            return cfg_score_vjp(self.score, x, t, self.condition, self.guidance, v)
        return score_vjp(self.score, x, t, self.condition, v)

    def velocity(self, x, t):
        """dx/dt of the deterministic flow; x (d,) or (n, d)."""
        x = np.asarray(x, dtype=float)
        if self.sde.variant == "vp":
            return -0.5 * beta(self.sde.schedule, t) * (x + self._score(x, t))
        if self.sde.variant == "mrvp":
            mu = self.sde.condition_mean
            return 0.5 * beta(self.sde.schedule, t) * ((mu - x) - self._score(x, t))
        sig = ddim_sigma(self.sde.schedule, t)
        x_scaled = x / np.sqrt(sig * sig + 1.0)
        return self._score(x_scaled, t) * ddim_sigma_prime(self.sde.schedule, t)

    def velocity_vjp(self, x, t, v):
        """v @ (d velocity / d x) at a single point; v (d,) or stacked (k, d)."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.sde.variant in ("vp", "mrvp"):
            return -0.5 * beta(self.sde.schedule, t) * (v + self._score_vjp(x, t, v))
        sig = ddim_sigma(self.sde.schedule, t)
        scale = 1.0 / np.sqrt(sig * sig + 1.0)
        inner = self._score_vjp(x * scale, t, v)
        return inner * scale * ddim_sigma_prime(self.sde.schedule, t)


def field_mode(field: FlowField) -> str:
    """Label for the conditioning mode the field was assembled with."""
    if field.guidance is not None:
        return f"guided({field.guidance.omega:g})"
    return "unconditional" if field.condition.is_null else "conditional"


def sample_ode(field: FlowField, x_end, cfg: SolverConfig, return_trajectory: bool = False):
    """Transport terminal samples to data space along the flow (T -> t_min)."""
    T = field.sde.schedule.terminal_time
    x0, traj = integrate(
        lambda t, y: field.velocity(y, t), np.asarray(x_end, dtype=float), T, cfg.t_min, cfg,
        record=return_trajectory,
    )
    return (x0, traj) if return_trajectory else x0


def euler_maruyama(drift_fn, diffusion_fn, x0, t0: float, t1: float, steps: int, rng):
    """Euler-Maruyama for dx = drift dt + diffusion dW between t0 and t1.

    With a zero diffusion this is exactly deterministic Euler of the drift.
    """
    if steps < 1:
        raise ContractError("steps must be >= 1")
    x = np.asarray(x0, dtype=float).copy()
    h = (t1 - t0) / steps
    root_h = np.sqrt(abs(h))
    for i in range(steps):
        t = t0 + i * h
        g = diffusion_fn(t)
        x = x + h * np.asarray(drift_fn(t, x))
        if np.any(np.asarray(g) != 0.0):
            x = x + root_h * g * rng.standard_normal(x.shape)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite state at t = {t0 + (i + 1) * h}", t=t0 + (i + 1) * h)
    return x


def sample_reverse_sde(field: FlowField, x_end, cfg: SolverConfig, seed: int):
    """Draw data samples by discretising the reverse-time SDE from T to t_min.

    Stochastic stepping is fixed-step only; pass an EulerFixed method.
    """
    if not isinstance(cfg.method, EulerFixed):
        raise ContractError("reverse-SDE sampling requires an EulerFixed solver")
    if field.sde.variant == "ddim_sigma":
        raise ContractError("the sigma-parameterised variant has no reverse SDE")
    rng = stream(seed, "reverse_sde")

    def rev_drift(t, x):
        g2 = beta(field.sde.schedule, t)
        return drift(field.sde, x, t) - g2 * field._score(x, t)

    return euler_maruyama(
        rev_drift,
        lambda t: diffusion(field.sde, t),
        np.asarray(x_end, dtype=float),
        field.sde.schedule.terminal_time,
        cfg.t_min,
        cfg.method.steps,
        rng,
    )


def reconstruct(field: FlowField, x0, cfg: SolverConfig, reverse_cfg: SolverConfig | None = None):
    """Round trip: integrate data to the terminal state and back.

    ``reverse_cfg`` lets the two legs use different solvers (the reverse leg
    defaults to the forward config).
    """
    T = field.sde.schedule.terminal_time
    rhs = lambda t, y: field.velocity(y, t)
    x_end, _ = integrate(rhs, np.asarray(x0, dtype=float), cfg.t_min, T, cfg, record=False)
    back = reverse_cfg if reverse_cfg is not None else cfg
    x0_prime, _ = integrate(rhs, x_end, T, back.t_min, back, record=False)
    return x0_prime


def trajectory_to_jsonl(traj: Trajectory, fh):
    """Write one JSON object per checkpoint: {"t": ..., "x": [...], "nfe": ...}."""
    for (t, x), nfe in zip(traj.checkpoints, traj.nfe_at):
        fh.write(json.dumps({"t": float(t), "x": np.asarray(x).ravel().tolist(), "nfe": int(nfe)}))
        fh.write("\n")
