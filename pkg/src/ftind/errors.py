"""Exception and warning types shared across the toolkit."""


class FtindError(Exception):
    """Base class for all toolkit errors."""


class DomainError(FtindError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class GeometryError(FtindError, ValueError):
    """A coil geometry violates its invariants."""


class NonPositiveInnerDiameter(GeometryError):
    pass


class ModelError(FtindError):
    """A model parameter combination produces a non-physical result."""


class PoleError(FtindError, ArithmeticError):
    """A rational model was evaluated at (or fitted with) a pole in its domain."""


class SingularNormalEquations(FtindError, ArithmeticError):
    pass


class NonFiniteResidual(FtindError, ArithmeticError):
    pass


class DegenerateData(FtindError, ValueError):
    pass


class PlateContact(FtindError):
    """The applied wrench closes one or more coil gaps (overload)."""


class RateError(FtindError, ValueError):
    pass


class InsufficientExcitation(FtindError, ValueError):
    pass


class VersionMismatch(FtindError):
    pass


class ChecksumError(FtindError):
    pass


class LengthMismatch(FtindError, ValueError):
    pass


class DegenerateWindow(FtindError, ValueError):
    pass


class MissingRun(FtindError, KeyError):
    pass


class ChannelOverflow(FtindError, ValueError):
    pass


class BadLength(FtindError, ValueError):
    pass


class BadCrc(FtindError, ValueError):
    pass


class SchemaError(FtindError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SaturationWarning(UserWarning):
    """Raw counts were clamped to the converter's output range."""


class ExtrapolationWarning(UserWarning):
    """Raw input lies outside the range a calibration was fitted on."""
