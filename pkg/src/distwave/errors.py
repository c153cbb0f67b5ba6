"""Exception hierarchy shared by all distwave modules."""


class DistwaveError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(DistwaveError, ValueError):
    """A configuration value is missing, malformed or violates a model constraint."""


class LevelTooDeepError(DistwaveError, ValueError):
    """A Daubechies level is finer than the precomputed refinement grid can resolve."""


class NormViolationError(DistwaveError, ValueError):
    """A custom signal lies outside the requested Besov ball."""


class InfeasibleScheduleError(DistwaveError):
    """The machine grouping would leave a group empty or assign zero coefficients."""


class FramingError(DistwaveError, ValueError):
    """A bit stream could not be parsed into complete messages."""


class MissingMessageError(DistwaveError):
    """A scheduled coefficient received no message at the central machine."""


class DegenerateSpreadError(DistwaveError, ValueError):
    """Too few points, or too narrow a range, for a log-log slope fit."""
