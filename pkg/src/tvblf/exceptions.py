"""Exception hierarchy shared by all modules."""


class TvblfError(ValueError):
    """Base class for all errors raised by this package."""


class DomainError(TvblfError):
    """Argument outside the domain of a closed-form expression."""


class InfeasibleReference(TvblfError):
    """A state envelope does not dominate its reference bound."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class DegenerateGain(TvblfError):
    """The filter gain selected from the envelopes is not positive."""


class DegenerateEnvelope(TvblfError):
    """A constructed envelope is not strictly positive on the grid."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class SingularMap(TvblfError):
    """The thrust-torque matrix cannot be inverted."""


class BarrierViolation(TvblfError):
    """The filtered error reached or crossed its barrier."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ConfigError(TvblfError):
    """A configuration document is malformed or violates a precondition."""
