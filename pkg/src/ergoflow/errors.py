"""Exception hierarchy shared by every ergoflow module."""


class ErgoflowError(Exception):
    """Base class for all library errors."""


class ContractViolation(ErgoflowError):
    """A caller broke a documented precondition (shape, arity, domain of a point)."""


class InputError(ErgoflowError, ValueError):
    """Non-finite or otherwise malformed numeric input."""


class ConfigurationError(ErgoflowError):
    """Unsupported combination of options, or an invalid experiment config."""


class UnsupportedScaleError(ConfigurationError):
    """Requested problem exceeds the desk-scale caps (e.g. box dimension > 3)."""


class DomainError(ErgoflowError, ValueError):
    """Mathematical domain violation (deg Q < 2 for a decomposition, zero-norm f, ...)."""


class OrbitOverflowError(ErgoflowError, OverflowError):
    """A polynomial orbit exponent left the exact-integer range of a double."""


class NumericInstabilityError(ErgoflowError):
    """An iterative numeric routine failed to converge.

    Attributes
    ----------
    t : float or None
        The flow time at which the failure happened, when known.
    """

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class EvaluationError(ErgoflowError):
    """An integrand produced a non-finite value."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t
