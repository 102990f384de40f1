"""Exception hierarchy shared by all modules."""


class NLDiffError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(NLDiffError):
    pass


class UnsupportedDimensionError(ConfigurationError):
    pass


class GeometryError(NLDiffError):
    pass


class ResolutionError(NLDiffError):
    pass


class ShapeError(NLDiffError, ValueError):
    pass


class NumericalError(NLDiffError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class OracleScaleError(NLDiffError):
    pass


class DataError(NLDiffError, ValueError):
    pass


class RangeError(NLDiffError, ValueError):
    pass


class SignalError(NLDiffError):
    pass


class FormatError(NLDiffError):
    pass


class DependencyError(NLDiffError):
    def __init__(self, message, command=None):
        super().__init__(message)
        self.command = command


class SimulationAborted(NumericalError):
    """Raised on non-finite values; ``last_good`` holds the previous state."""

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good
