"""Exception hierarchy shared by every module of the package."""


class CascadeServoError(Exception):
    """Base class for all errors raised by cascadeservo."""


# --- transfer-function algebra -------------------------------------------

class DivisionByZeroTransfer(CascadeServoError, ZeroDivisionError):
    pass


class AlgebraicLoop(CascadeServoError):
    """1 + forward*loop vanishes identically."""


class ImproperTransfer(CascadeServoError):
    pass


# --- simulation ------------------------------------------------------------

class SimulationError(CascadeServoError):
    """Raised from inside a simulation; ``trace`` holds the samples so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class AlgebraicLoopDetected(SimulationError):
    pass


class NonFiniteState(SimulationError):
    pass


class SingularityReached(SimulationError):
    pass


class SignalMissing(CascadeServoError, KeyError):
    pass


# --- synthesis -------------------------------------------------------------

class InvalidBandwidth(CascadeServoError, ValueError):
    pass


class NonMinimumPhasePlant(CascadeServoError, ValueError):
    pass


# --- geometry --------------------------------------------------------------

class DimensionMismatch(CascadeServoError, ValueError):
    pass


class NoConvergence(CascadeServoError):
    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class PointBehindCamera(CascadeServoError, ValueError):
    pass


class NonPositiveDepth(CascadeServoError, ValueError):
    pass


class BehindLens(CascadeServoError, ValueError):
    pass


class ProjectionSingularity(CascadeServoError, ValueError):
    pass


class EmptyInterval(CascadeServoError, ValueError):
    pass


class SingularInertia(CascadeServoError):
    pass


# --- imaging ---------------------------------------------------------------

class EmptyStack(CascadeServoError, ValueError):
    pass


class NonPositiveSigma(CascadeServoError, ValueError):
    pass


class ImageTooSmall(CascadeServoError, ValueError):
    pass


class EmptyCandidates(CascadeServoError, ValueError):
    pass


# --- configuration / CLI ---------------------------------------------------

class ParseError(CascadeServoError, ValueError):
    def __init__(self, message, line=None, field=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.line = line
        self.field = field


class ValidationError(CascadeServoError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class UnknownParameter(CascadeServoError, KeyError):
    pass
