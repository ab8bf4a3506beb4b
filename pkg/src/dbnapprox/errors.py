"""Exception hierarchy shared by every module."""


class DbnApproxError(Exception):
    """Base class for all library errors."""


class DomainError(DbnApproxError, ValueError):
    """Input outside the mathematical domain (non-finite point, bad parameter)."""


class UnsupportedError(DbnApproxError):
    """Operation not available for this density family or configuration."""


class ResourceError(DbnApproxError):
    """A configured size budget would be exceeded."""


class ConvergenceError(DbnApproxError):
    """An iterative search ran out of budget.

    ``best`` carries the best value achieved, ``stage`` names the pipeline
    stage when raised from inside a pipeline.
    """

    def __init__(self, message, best=None, stage=None):
        if stage is not None:
            message = f"[{stage}] {message}"
        super().__init__(message)
        self.best = best
        self.stage = stage


class PreconditionError(DbnApproxError, ValueError):
    """A verified precondition failed; ``node`` names the offending point."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class DimensionError(DbnApproxError, ValueError):
    """Shapes or layer sizes do not match."""


class DegenerateModelError(DbnApproxError):
    """The model puts (almost) no mass where it is needed."""


class ConfigError(DbnApproxError):
    """Malformed experiment configuration."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(DbnApproxError, ValueError):
    """A CSV file does not have the columns an operation needs."""
