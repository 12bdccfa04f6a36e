"""Exception types shared across the package."""


class SynlikError(Exception):
    """Base class for all package-specific errors."""


class DomainError(SynlikError, ValueError):
    """An argument lies outside the domain of an operation."""


class ParameterDomainError(DomainError):
    """A model parameter lies outside its admissible region."""


class SingularCovarianceError(SynlikError):
    """A simulated summary covariance is numerically singular."""

    def __init__(self, message, theta=None, m=None):
        super().__init__(message)
        self.theta = theta
        self.m = m


class FactorizationError(SynlikError):
    """A covariance matrix could not be factorized (not positive-definite)."""


class DegenerateSummaryError(SynlikError):
    """Summary statistics are degenerate (e.g. zero interquartile range)."""


class DegeneratePosteriorError(SynlikError):
    """All grid points carry zero posterior mass."""


class NotAMaximumError(SynlikError):
    """A Hessian that must be negative-definite is not."""


class InsufficientResolutionError(SynlikError):
    """Too few grid points fall inside a local fitting window."""


class ConfigError(SynlikError, ValueError):
    """A run configuration contains an unknown or invalid key."""
