"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SingularParticlesError(Exception):
    """Base class for all package errors."""


class UnsupportedDim(SingularParticlesError, ValueError):
    pass


class SingularPoint(SingularParticlesError, ValueError):
    """Raised when a kernel is evaluated on (or within the guard of) its singular set."""


class CollisionState(SingularParticlesError, ValueError):
    """Raised when a configuration has a pair closer than the singularity guard."""


class NoAnalyticDivergence(SingularParticlesError):
    pass


class NoAnalyticBound(SingularParticlesError):
    pass


class QuadratureUnderresolved(SingularParticlesError):
    pass


class DegenerateTrial(SingularParticlesError, ValueError):
    pass


class GridUnderresolved(SingularParticlesError):
    def __init__(self, message: str, value: float | None = None):
        super().__init__(message)
        self.value = value


class BudgetExhausted(SingularParticlesError):
    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class Inconclusive(SingularParticlesError):
    pass


class BandwidthUnderresolved(SingularParticlesError):
    pass


class TailBoundTooLarge(SingularParticlesError):
    pass


class ConfigError(SingularParticlesError):
    """Schema or cross-field validation failure in an experiment config."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = ""
        if field:
            where += f"{field}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)
