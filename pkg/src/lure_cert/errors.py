"""Exception hierarchy shared across the package."""


class LureCertError(Exception):
    """Base class for all package errors."""


class ImproperTransferFunction(LureCertError, ValueError):
    pass


class ZeroDenominator(LureCertError, ValueError):
    pass


class SingularAtZ(LureCertError, ZeroDivisionError):
    pass


class DimensionMismatch(LureCertError, ValueError):
    pass


class MissingVariable(LureCertError, KeyError):
    pass


class InvalidRate(LureCertError, ValueError):
    pass


class SolverError(LureCertError, RuntimeError):
    pass


class TimeLimit(SolverError):
    pass


class UnstablePlant(LureCertError, ValueError):
    pass


class NoFeasiblePoint(LureCertError, RuntimeError):
    pass


class FingerprintMismatch(LureCertError, ValueError):
    pass


class IllPosedLoop(LureCertError, ValueError):
    pass


class ValidationFailed(LureCertError, AssertionError):
    """Raised by certificate validation; ``label`` names the violated constraint."""

    def __init__(self, label, value, message=None):
        self.label = label
        self.value = value
        super().__init__(message or f"{label}: violation {value:.3e}")
