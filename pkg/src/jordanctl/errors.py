"""Exception hierarchy shared by all workbench modules."""


class WorkbenchError(Exception):
    """Base class for every error raised by jordanctl."""


class InvalidDimension(WorkbenchError):
    pass


class InvalidParameter(WorkbenchError):
    pass


class NonElliptic(WorkbenchError):
    pass


class AlphaZero(WorkbenchError):
    """Raised by operations that need a diagonalizable mode matrix."""


class X0OutOfRange(WorkbenchError):
    pass


class InsufficientPrecision(WorkbenchError):
    pass


class ResidualTooLarge(WorkbenchError):
    def __init__(self, message: str, location=None):
        super().__init__(message)
        self.location = location


class DegenerateExponents(WorkbenchError):
    pass


class IllConditioned(WorkbenchError):
    pass


class NonControllableMode(WorkbenchError):
    def __init__(self, j: int, k: int):
        super().__init__(f"B*D*V vanishes for mode (j={j}, k={k})")
        self.j = j
        self.k = k


class VanishingSine(WorkbenchError):
    pass


class VanishingVB(WorkbenchError):
    pass


class IndexMismatch(WorkbenchError):
    pass


class IncompatibleInitialState(WorkbenchError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class UnresolvedControl(WorkbenchError):
    pass


class QuadratureFailure(WorkbenchError):
    pass


class EpsilonTooLarge(WorkbenchError):
    pass


class SignViolation(WorkbenchError):
    pass


class ExtraZero(WorkbenchError):
    pass


class DimensionMismatch(WorkbenchError):
    pass
