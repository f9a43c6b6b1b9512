"""Exception hierarchy shared by every module of the package."""


class PJMPError(Exception):
    """Base class for all errors raised by :mod:`pjmp`."""


class ModelError(PJMPError, ValueError):
    """A network configuration violates one of the model assumptions."""

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class NonPositiveDelta(ModelError):
    pass


class IntensityBelowFloor(ModelError):
    """The intensity dips below the declared lower bound ``delta``."""


class IntensityBelowLinearBound(ModelError):
    pass


class NegativeWeight(ModelError):
    pass


class NonzeroDiagonal(ModelError):
    pass


class NonPositiveCeiling(ModelError):
    pass


class InvalidState(ModelError):
    pass


class IndexOutOfRange(PJMPError, IndexError):
    pass


class ObservableUndefined(PJMPError, KeyError):
    pass


class StateSpaceTooLarge(PJMPError, RuntimeError):
    pass


class MultipleClosedClasses(PJMPError, RuntimeError):
    pass


class SingularSystem(PJMPError, ArithmeticError):
    pass


class NonFiniteTime(PJMPError, ValueError):
    pass


class NonPositiveProbability(PJMPError, ArithmeticError):
    pass


class NotInRecurrentDomain(PJMPError, ValueError):
    pass


class GridTooCoarse(UserWarning):
    """Empirical constants moved by more than the allowed fraction on refinement."""


class ConfigError(ModelError):
    """A run configuration is malformed or refers to something missing."""
