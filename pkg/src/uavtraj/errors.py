"""Exception hierarchy shared by every module.

The CLI maps ``DataError`` to exit code 2 and ``NumericalError`` to exit
code 3; anything else escaping a command is a bug.
"""


class UavTrajError(Exception):
    """Base class for all package errors."""


class DataError(UavTrajError, ValueError):
    """Invalid inputs, malformed files, or violated preconditions."""


class NumericalError(UavTrajError, ArithmeticError):
    """A computation produced or met values it cannot handle."""


# numerics
class NotPositiveDefinite(NumericalError):
    pass


class SingularFactor(NumericalError):
    pass


class InvalidRange(DataError):
    pass


# trajgen
class DegenerateNormal(DataError):
    pass


class InvalidDuration(DataError):
    pass


# dataset
class NonMonotonicTimestamps(DataError):
    pass


class TooFewSamples(DataError):
    pass


class WrongChannel(DataError):
    pass


class NonUniformSpacing(DataError):
    pass


class InvalidFractions(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class VersionMismatch(DataError):
    pass


# normalize
class DegenerateCovariance(NumericalError):
    pass


class ZeroData(DataError):
    pass


class MethodMismatch(DataError):
    pass


# model
class DimensionMismatch(DataError):
    pass


class StaleTape(DataError):
    pass


class CorruptCheckpoint(DataError):
    pass


# train
class NonFiniteGradient(NumericalError):
    pass


class NonFiniteLoss(NumericalError):
    pass


class EmptyDataset(DataError):
    pass


# metrics
class EmptyInput(DataError):
    pass


# stream
class NonMonotonicTime(DataError):
    pass


class NotReady(DataError):
    pass


class ChannelMismatch(DataError):
    pass


class NoCompleteRecords(DataError):
    pass


class SourceTooShort(DataError):
    pass
