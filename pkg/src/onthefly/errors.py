"""Exception types shared across the toolkit."""


class OnTheFlyError(Exception):
    """Base class for all toolkit errors."""


class ArgumentError(OnTheFlyError, ValueError):
    """Raised for malformed arguments (wrong dimension, point outside a domain...)."""


class UnsupportedObjectiveError(OnTheFlyError, ValueError):
    """Raised when an operation is not defined for the given objective id."""


class ConfigError(OnTheFlyError, ValueError):
    """Raised for invalid configurations or algorithm/objective pairings.

    ``field`` names the offending configuration key when one can be singled out.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class IntegrationBlowupError(OnTheFlyError, ArithmeticError):
    """Raised when an ODE integration produces a non-finite state."""

    def __init__(self, time):
        super().__init__(f"non-finite state encountered at t={time:g}")
        self.time = time


class ProposalExhaustedError(OnTheFlyError, RuntimeError):
    """Raised when no in-domain proposal was found within the redraw budget."""
