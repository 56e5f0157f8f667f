"""Exception types shared across the package.

The split mirrors how callers should react: configuration problems are
fixable before any computation starts, contract violations are caller bugs,
and the numerical errors carry enough state to diagnose a failed run.
"""


class DifflikError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(DifflikError):
    """Invalid or inconsistent configuration (bad field values, missing
    condition mean, unknown keys). May carry several messages joined by
    newlines so all violations surface at once."""


class ContractError(DifflikError):
    """A caller violated an operation precondition (dimension mismatch,
    empty batch, null condition where one is required, ...)."""


class DomainError(DifflikError):
    """Argument outside its mathematical domain, e.g. a time outside
    [0, T]."""


class IntegrationError(DifflikError):
    """ODE solve exceeded its step budget or the step size underflowed.

    ``trajectory`` holds the partial trajectory up to the failure.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class NumericalError(DifflikError):
    """Non-finite values appeared in a state vector. ``t`` is the time at
    which the offending state was produced."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class TrainingError(DifflikError):
    """Training loss diverged. ``step`` is the offending step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
