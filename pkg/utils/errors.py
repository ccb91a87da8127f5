"""Exception hierarchy shared by every package.

Each class carries the exit status the command line maps it to.
"""


class HittingTimesError(Exception):
    """Base class for all errors raised by this project."""

    exit_code = 1


class LatticeError(HittingTimesError, ValueError):
    """Bad geometry, unknown site or mismatched configuration widths."""

    exit_code = 2


class ConfigError(HittingTimesError, ValueError):
    """A run configuration failed validation.

    The message always starts with the dotted field path, e.g.
    ``model.rho: must lie in (0, 1)``.
    """

    exit_code = 2

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class CapExceeded(HittingTimesError):
    """A size cap was hit; the message names the cap."""

    exit_code = 3

    def __init__(self, cap: str, limit: int, requested: int):
        self.cap = cap
        self.limit = limit
        self.requested = requested
        super().__init__(f"cap '{cap}' exceeded: requested {requested}, limit {limit}")


class PreconditionError(HittingTimesError, ValueError):
    """An operation was called outside its domain."""


class ConstructionUnavailable(PreconditionError):
    """The weight constant cannot be built for this profile."""


class AcceptanceTooLow(PreconditionError):
    """Rejection sampling would accept too few trajectories."""


class ConvergenceError(HittingTimesError, ArithmeticError):
    """An iterative solver stalled before reaching its tolerance."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")
