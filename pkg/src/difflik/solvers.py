"""ODE integrators: fixed-step Euler and adaptive Dormand-Prince 5(4).

``integrate`` solves dy/dt = rhs(t, y) between two times (either direction;
the step carries the sign). The state is any float ndarray; error control
treats all elements uniformly.

The adaptive method is the standard Dormand-Prince embedded 5(4) pair with
the first-same-as-last (FSAL) property: the 7th stage of an accepted step
is the 1st stage of the next, so a solve costs one initial evaluation plus
six evaluations per attempted (accepted or rejected) step. ``Trajectory.nfe``
counts every rhs call and is exactly ``1 + 6 * (accepted + rejected)``.

Step-size control is a PI controller on the embedded error estimate:

    factor = safety * err^(-0.7/5) * err_prev^(0.4/5)

with safety 0.9, the factor clamped to [0.2, 5], and ``err_prev`` the error
of the last accepted step (1 before any acceptance). A step is accepted
when the RMS of the componentwise error, scaled by atol + rtol*max(|y|,
|y_new|), is at most 1. The initial step is 1e-3 of the interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, IntegrationError, NumericalError
from .schedules import DEFAULT_T_MIN


@dataclass(frozen=True)
class EulerFixed:
    """Uniform explicit Euler with the given number of steps."""

    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {self.steps}")


@dataclass(frozen=True)
class Rk45:
    """Adaptive Dormand-Prince 5(4) with the given tolerances."""

    rtol: float = 1e-5
    atol: float = 1e-5
    max_steps: int = 100_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ConfigurationError("rtol and atol must be positive")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")


@dataclass(frozen=True)
class SolverConfig:
    method: EulerFixed | Rk45 = field(default_factory=Rk45)
    t_min: float = DEFAULT_T_MIN

    def __post_init__(self):
        if not self.t_min > 0:
            raise ConfigurationError(f"t_min must be > 0, got {self.t_min}")


@dataclass
class Trajectory:
    """Accepted states of one solve. ``nfe_at[i]`` is the rhs-call count when
    ``checkpoints[i]`` was recorded."""

    checkpoints: list
    nfe_at: list
    nfe: int = 0
    accepted: int = 0
    rejected: int = 0

    def times(self):
        return np.array([t for t, _ in self.checkpoints])

    def states(self):
        return np.array([y for _, y in self.checkpoints])


# Dormand-Prince 5(4) tableau. Node fractions, stage coefficients, 5th-order
# propagation weights (row 7 equals the weights: FSAL), and the 5th-4th
# order error weights.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_ERR = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

_SAFETY = 0.9
_EXP_NEW = 0.7 / 5.0
_EXP_PREV = 0.4 / 5.0
_FACTOR_MIN = 0.2
_FACTOR_MAX = 5.0
_INITIAL_STEP_FRACTION = 1e-3


def _check_state(y, t):
    if not np.all(np.isfinite(y)):
        raise NumericalError(f"non-finite state at t = {t}", t=t)


def integrate(rhs, y0, t0: float, t1: float, cfg: SolverConfig, record: bool = True):
    """Solve dy/dt = rhs(t, y) from t0 to t1; returns (y_end, Trajectory).

    ``record=False`` skips per-step checkpoint storage (the endpoint is
    still recorded) for long solves whose path is not needed.
    """
    if t0 == t1:
        raise ContractError("t0 and t1 must differ")
    y0 = np.asarray(y0, dtype=float)
    _check_state(y0, t0)
    if isinstance(cfg.method, EulerFixed):
        return _integrate_euler(rhs, y0, t0, t1, cfg.method, record)
    return _integrate_dopri5(rhs, y0, t0, t1, cfg.method, record)


def _integrate_euler(rhs, y0, t0, t1, method: EulerFixed, record):
    n = method.steps
    h = (t1 - t0) / n
    traj = Trajectory(checkpoints=[(t0, y0.copy())], nfe_at=[0])
    y = y0.copy()
    t = t0
    for i in range(n):
        y = y + h * np.asarray(rhs(t, y))
        # recompute instead of accumulating so the final time is exact
        t = t0 + (i + 1) * h if i + 1 < n else t1
        traj.nfe += 1
        traj.accepted += 1
        _check_state(y, t)
        if record or i + 1 == n:
            traj.checkpoints.append((t, y.copy()))
            traj.nfe_at.append(traj.nfe)
    return y, traj


def _error_norm(err, y_old, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _integrate_dopri5(rhs, y0, t0, t1, method: Rk45, record):
    direction = 1.0 if t1 > t0 else -1.0
    h = direction * abs(t1 - t0) * _INITIAL_STEP_FRACTION
    traj = Trajectory(checkpoints=[(t0, y0.copy())], nfe_at=[0])

    y, t = y0.copy(), t0
    k = [None] * 7
    k[0] = np.asarray(rhs(t, y), dtype=float)
    traj.nfe += 1
    err_prev = 1.0

    while (t1 - t) * direction > 0:
        if traj.accepted + traj.rejected >= method.max_steps:
            raise IntegrationError(
                f"exceeded max_steps={method.max_steps} at t = {t}", trajectory=traj
            )
        if abs(h) <= max(abs(t), abs(t1)) * 1e-14:
            raise IntegrationError(f"step size underflow at t = {t}", trajectory=traj)
        clipped = (t + h - t1) * direction >= 0
        if clipped:
            h = t1 - t

        for i in range(1, 7):
            yi = y + h * sum(a * k[j] for j, a in enumerate(_A[i]))
            k[i] = np.asarray(rhs(t + _C[i] * h, yi), dtype=float)
        traj.nfe += 6

        y_new = y + h * sum(b * k[j] for j, b in enumerate(_B5) if b != 0.0)
        err_vec = h * sum(e * k[j] for j, e in enumerate(_ERR) if e != 0.0)
        _check_state(y_new, t + h)
        err = _error_norm(err_vec, y, y_new, method.rtol, method.atol)

        if err <= 1.0:
            y, t = y_new, (t1 if clipped else t + h)
            k[0] = k[6]  # FSAL: last stage of the accepted step seeds the next
            traj.accepted += 1
            if record or t == t1:
                traj.checkpoints.append((t, y.copy()))
                traj.nfe_at.append(traj.nfe)
            factor = _SAFETY * max(err, 1e-16) ** -_EXP_NEW * err_prev**_EXP_PREV
            err_prev = max(err, 1e-16)
        else:
            traj.rejected += 1
            factor = _SAFETY * err**-_EXP_NEW * err_prev**_EXP_PREV
        h *= min(max(factor, _FACTOR_MIN), _FACTOR_MAX)

    return y, traj
