"""Exception and warning types shared across the package."""


class PlanarFlowError(Exception):
    pass


class ParameterError(PlanarFlowError, ValueError):
    """Invalid argument values (empty intervals, bad counts, ...)."""


class DomainError(PlanarFlowError, ValueError):
    """A point lies outside the closed upper half-plane."""


class SpanError(PlanarFlowError, ValueError):
    """A time lies outside the span of a driver path."""


class UnsupportedFieldError(PlanarFlowError, TypeError):
    """The operation needs something the field cannot provide."""


class NumericalError(PlanarFlowError, ArithmeticError):
    """Base for failures of the numerical integration itself."""


class SingularityError(NumericalError):
    def __init__(self, message, point=None, time=None):
        super().__init__(message)
        self.point = point
        self.time = time


class ExplosionError(NumericalError):
    def __init__(self, message, time=None, indices=None):
        super().__init__(message)
        self.time = time
        self.indices = indices


class FlowWarning(UserWarning):
    pass


class SnapWarning(FlowWarning):
    """A requested time was moved onto the driver grid."""


class CensoringWarning(FlowWarning):
    pass


class TruncationWarning(FlowWarning):
    pass


class SubdivisionCapWarning(FlowWarning):
    pass


class ThresholdWarning(FlowWarning):
    pass
