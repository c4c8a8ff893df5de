"""Exception hierarchy.

Every error raised by the library derives from :class:`LabError`.  Errors
caused by bad input data (as opposed to bad configuration) additionally derive
from :class:`DataError` so the CLI can map them to the data-error exit code.
"""


class LabError(Exception):
    """Base class for all library errors."""


class ConfigError(LabError, ValueError):
    """Invalid or unknown configuration value."""


class DataError(LabError, ValueError):
    """Input data is malformed or unusable."""


# core
class ZeroVector(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NegativeAge(LabError, ValueError):
    pass


class EmptyStore(LabError, ValueError):
    pass


# geometry
class DomainError(LabError, ValueError):
    pass


class DegenerateCovariance(DataError):
    pass


class DuplicatePoints(DataError):
    pass


class InsufficientData(LabError, ValueError):
    pass


# hazard
class QuadratureFailure(LabError, RuntimeError):
    pass


class InsufficientEvents(InsufficientData):
    pass


# experiments
class PoolTooSmall(DataError):
    pass


class NonConvergence(LabError, RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class StoreTooSmall(DataError):
    pass


# backends
class LengthMismatch(LabError, ValueError):
    pass


# solutions
class ShrinkRequest(LabError, ValueError):
    pass


class RankDeficient(DataError):
    pass


class TooManyVectors(DataError):
    pass


class NearDependence(DataError):
    pass


# stats
class TooFewPoints(InsufficientData):
    pass


class NonpositiveInput(LabError, ValueError):
    pass


class RetentionOutOfRange(LabError, ValueError):
    pass


class NoTransition(LabError, ValueError):
    pass


class ZeroVariance(LabError, ValueError):
    pass


# io
class BadMagic(DataError):
    pass


class TruncatedPayload(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class MissingLabel(DataError):
    pass
