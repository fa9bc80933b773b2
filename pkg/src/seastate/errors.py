"""Exception hierarchy shared by all seastate modules."""


class SeaStateError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SeaStateError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UnsupportedHeadingError(DomainError):
    """Relative heading outside [pi/2, pi]; the inverse Doppler map is ambiguous there."""


class DegenerateKinematicsError(DomainError):
    """The speed correction factor alpha is non-positive."""


class DiscretizationError(SeaStateError):
    """The continuous state matrix cannot be discretised (singular A)."""


class ConditioningError(SeaStateError, ArithmeticError):
    """A matrix that has to be inverted or factorised is (numerically) singular."""


class DivergenceError(SeaStateError, ArithmeticError):
    """A filter produced non-finite values or an absurd innovation statistic."""

    def __init__(self, message, step=None, channel=None):
        self.step = step
        self.channel = channel
        tags = []
        if channel is not None:
            tags.append(f"channel={channel}")
        if step is not None:
            tags.append(f"step={step}")
        if tags:
            message = f"{message} [{', '.join(tags)}]"
        super().__init__(message)


class DataError(SeaStateError, ValueError):
    """Malformed measurement data (missing columns, NaNs, bad units)."""


class GapError(DataError):
    """Timestamps are not uniformly spaced."""


class InsufficientDataError(DataError):
    """The record is too short for the requested analysis."""


class DegenerateSpectrumError(SeaStateError, ValueError):
    """The spectrum carries no energy (m0 == 0)."""


class ConfigError(SeaStateError, ValueError):
    """Invalid or inconsistent scenario configuration."""
