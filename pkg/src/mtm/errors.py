"""Exception hierarchy shared by every module."""


class MTMError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(MTMError, ValueError):
    """Invalid parameters, covariances, configs or weight definitions."""


class UsageError(MTMError, ValueError):
    """A call that violates an operation's preconditions."""


class InvariantViolation(MTMError, RuntimeError):
    """A density or weight took a value its contract forbids."""


class EnumerationSizeError(MTMError):
    """Exact kernel enumeration would exceed the term budget."""


class ChainError(MTMError):
    """A step failed inside :func:`mtm.samplers.run_chain`."""

    def __init__(self, iteration, cause):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"iteration {iteration}: {type(cause).__name__}: {cause}")
