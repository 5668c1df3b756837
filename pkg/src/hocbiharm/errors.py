"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class ConfigurationError(ValueError):
    """Boundary data or problem setup is inconsistent with the requested scheme."""


class CertificationError(RuntimeError):
    """An exact-arithmetic stencil check did not hold."""


class DerivationError(RuntimeError):
    """The undetermined-coefficient system has no solution under the given constraints."""

    def __init__(self, message, violated_rows=()):
        super().__init__(message)
        self.violated_rows = list(violated_rows)


class NonConvergenceError(RuntimeError):
    """An iterative solve stopped before reaching the requested tolerance.

    The best iterate and the solver statistics are attached so callers can
    still inspect (or report) a partial result.
    """

    def __init__(self, message, x=None, stats=None):
        super().__init__(message)
        self.x = x
        self.stats = stats


class EstimationError(RuntimeError):
    """Condition-number estimation failed."""
