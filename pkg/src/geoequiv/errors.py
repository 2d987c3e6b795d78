"""Exception types raised across the package."""


class DomainError(ValueError):
    """A point lies outside a non-periodic chart bound or a stencil leaves the chart."""


class ProfileError(ValueError):
    """Eigenvalue profiles violate ordering, positivity or periodicity requirements."""


class PreconditionError(ValueError):
    """An operation was called with arguments outside its contract."""


class StepFailure(RuntimeError):
    """The implicit stage equations did not converge.

    ``state`` holds the last accepted (x, p) pair, ``iterations`` the number of
    fixed-point sweeps attempted.
    """

    def __init__(self, message, state=None, iterations=0):
        super().__init__(message)
        self.state = state
        self.iterations = iterations


class ConfigError(ValueError):
    """Malformed run configuration. ``line`` is 1-based when known."""

    def __init__(self, message, line=None, key=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.key = key
