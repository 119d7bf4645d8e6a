"""Exception hierarchy shared by the analytic engine, simulator and CLI."""


class MultiSirError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(MultiSirError, ValueError):
    """A model coefficient or argument is outside its admissible range."""


class ContractError(MultiSirError, ValueError):
    """A precondition of an operation does not hold."""


class ConfigError(MultiSirError, ValueError):
    """A configuration document is malformed.

    ``key`` is the dotted path of the offending entry, when known.
    """

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class NumericalError(MultiSirError, RuntimeError):
    """A numerical procedure failed (non-convergence, blow-up, ...)."""

    def __init__(self, message, state=None):
        self.state = state
        super().__init__(message)


class DivergenceError(NumericalError):
    """A NaN or infinite value appeared in a simulated field."""

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)


class IntegrityError(NumericalError):
    """A simulated field violated an invariant beyond round-off tolerance."""


class DomainTooSmallError(NumericalError):
    """A front came too close to the edge of the truncated domain."""

    def __init__(self, message, strain=None, t=None):
        self.strain = strain
        self.t = t
        super().__init__(message)


class InsufficientDataError(MultiSirError, ValueError):
    """Not enough usable samples for a measurement."""
