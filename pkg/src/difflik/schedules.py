"""Noise schedules and their closed-form integrals.

A schedule fixes the instantaneous noising rate beta(t) on [0, T]. Two
families are supported, both parameterised by the endpoint rates
``beta0 = beta(0)`` and ``beta_t = beta(T)``:

    linear:     beta(t) = beta0 + (beta_t - beta0) * (t/T)
    sublinear:  beta(t) = (sqrt(beta0) + (sqrt(beta_t) - sqrt(beta0)) * (t/T))^2

Both families have polynomial antiderivatives, so the cumulative rate
``B(t) = integral of beta from 0 to t`` is evaluated in closed form; no
quadrature is performed anywhere in this module. With s = t/T:

    linear:     B(t) = beta0*t + (beta_t - beta0) * t*s/2
    sublinear:  B(t) = a^2*t + a*b*t*s + b^2*t*s^2/3,
                a = sqrt(beta0), b = sqrt(beta_t) - sqrt(beta0)

Derived quantities used throughout the package:

    signal retention   alpha_bar(t) = exp(-B(t))
    cumulative noise   sigma(t)     = sqrt(1/alpha_bar(t) - 1) = sqrt(e^B - 1)

``alpha_bar`` here is the continuous-time limit of the stepwise product
prod(1 - beta*dt); the discrete product converges to it as the step count
grows and is kept only as a test oracle. The continuous form is used because
the solvers need a smooth, differentiable sigma(t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError

SCHEDULE_KINDS = ("linear", "sublinear")

# Default endpoint rates; standard variance-preserving values. Overridable
# everywhere a schedule is constructed.
DEFAULT_BETA0 = 0.05
DEFAULT_BETA_T = 20.0

# Times below this are clipped away by the integrators to avoid the
# std -> 0 singularity at t = 0.
DEFAULT_T_MIN = 1e-5


@dataclass(frozen=True)
class NoiseSchedule:
    """Endpoint-parameterised noising rate on [0, terminal_time]."""

    kind: str = "linear"
    beta0: float = DEFAULT_BETA0
    beta_t: float = DEFAULT_BETA_T
    terminal_time: float = 1.0

    def __post_init__(self):
        problems = []
        if self.kind not in SCHEDULE_KINDS:
            problems.append(f"unknown schedule kind {self.kind!r}; expected one of {SCHEDULE_KINDS}")
        if not self.beta0 > 0:
            problems.append(f"beta0 must be > 0, got {self.beta0}")
        if not self.beta_t > 0:
            problems.append(f"beta_t must be > 0, got {self.beta_t}")
        if not self.terminal_time > 0:
            problems.append(f"terminal_time must be > 0, got {self.terminal_time}")
        if problems:
            raise ConfigurationError("\n".join(problems))


def _check_time(schedule: NoiseSchedule, t):
    """Validate t in [0, T] (tolerating float roundoff) and clip into range."""
    T = schedule.terminal_time
    tol = 1e-9 * max(1.0, T)
    t = np.asarray(t, dtype=float)
    if np.any(t < -tol) or np.any(t > T + tol):
        raise DomainError(f"time {t} outside schedule domain [0, {T}]")
    return np.clip(t, 0.0, T)


def beta(schedule: NoiseSchedule, t):
    """Instantaneous noising rate beta(t). Scalar in, scalar out; arrays broadcast."""
    t = _check_time(schedule, t)
    s = t / schedule.terminal_time
    if schedule.kind == "linear":
        out = schedule.beta0 + (schedule.beta_t - schedule.beta0) * s
    else:
        a = math.sqrt(schedule.beta0)
        b = math.sqrt(schedule.beta_t) - a
        out = (a + b * s) ** 2
    return out if out.ndim else float(out)


def int_beta(schedule: NoiseSchedule, t):
    """Cumulative rate B(t) = integral of beta over [0, t], in closed form."""
    t = _check_time(schedule, t)
    s = t / schedule.terminal_time
    if schedule.kind == "linear":
        out = schedule.beta0 * t + (schedule.beta_t - schedule.beta0) * t * s / 2.0
    else:
        a = math.sqrt(schedule.beta0)
        b = math.sqrt(schedule.beta_t) - a
        out = a * a * t + a * b * t * s + b * b * t * s * s / 3.0
    return out if out.ndim else float(out)


def alpha_bar(schedule: NoiseSchedule, t):
    """Signal retention exp(-B(t)); 1 at t=0, decaying monotonically."""
    return np.exp(-np.asarray(int_beta(schedule, t)))[()]


def ddim_sigma(schedule: NoiseSchedule, t):
    """Cumulative perturbation scale sigma(t) = sqrt(1/alpha_bar - 1).

    Strictly increasing from sigma(0) = 0; computed as sqrt(expm1(B)) for
    accuracy near t = 0.
    """
    return np.sqrt(np.expm1(np.asarray(int_beta(schedule, t))))[()]


def ddim_sigma_prime(schedule: NoiseSchedule, t):
    """d sigma / dt = beta * e^B / (2 sigma). Diverges at t = 0; callers clip
    to t >= t_min before evaluating."""
    B = np.asarray(int_beta(schedule, t))
    sig = np.sqrt(np.expm1(B))
    if np.any(sig == 0.0):
        raise DomainError("ddim_sigma_prime is singular at t = 0")
    return (np.asarray(beta(schedule, t)) * np.exp(B) / (2.0 * sig))[()]
