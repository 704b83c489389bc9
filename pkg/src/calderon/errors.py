"""Exception types shared across the package."""


class CalderonError(Exception):
    """Base class for all package errors."""


class ValidationError(CalderonError):
    """A constructor or configuration invariant was violated."""


class DomainMismatch(CalderonError):
    """Two objects built on different domains were combined."""


class NearSingular(CalderonError):
    """Zero is (numerically) a Dirichlet eigenvalue of the interior operator."""

    def __init__(self, message, sigma_min=None):
        super().__init__(message)
        self.sigma_min = sigma_min


class SolverFailure(CalderonError):
    """A linear solve did not reach the required residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CollarViolation(CalderonError):
    """The conductivity is not identically one on the collar."""


class SupportViolation(CalderonError):
    """A field that must be compactly supported reaches the outer shell."""


class OverflowGuard(CalderonError):
    """k * L exceeds the exponential-modulation safety bound."""


class NoContraction(CalderonError):
    """The Neumann-series iteration is not contracting at this frequency."""

    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class MaxIterExceeded(CalderonError):
    """Fixed-point iteration hit the iteration cap before converging."""


class KTooSmall(CalderonError):
    """k is below the reality constraint of the zeta-pair construction."""


class ZeroXi(CalderonError):
    """The zeta-pair construction needs a nonzero frequency vector."""


class IllConditioned(CalderonError):
    """The boundary integral operator is numerically ill conditioned."""

    def __init__(self, message, cond=None):
        super().__init__(message)
        self.cond = cond


class ConfigError(CalderonError):
    """A run configuration failed validation."""
