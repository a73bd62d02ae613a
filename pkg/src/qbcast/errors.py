"""Exception types shared across the package."""


class QbcError(Exception):
    """Base class for all package errors."""


class ValidationError(QbcError, ValueError):
    """Input failed a structural or numerical validity check."""


class NonHermitian(ValidationError):
    pass


class NonFinite(ValidationError):
    pass


class NegativeEigenvalue(ValidationError):
    pass


class DimMismatch(ValidationError):
    pass


class NotTracePreserving(ValidationError):
    pass


class ZeroProbabilitySymbol(ValidationError):
    pass


class BadPartition(ValidationError):
    pass


class BadOperands(ValidationError):
    pass


class NotClassical(ValidationError):
    pass


class NotPureEnsemble(ValidationError):
    pass


class InvalidEpsilon(ValidationError):
    pass


class OutOfWindow(ValidationError):
    pass


class SolverError(QbcError):
    """A numerical routine failed to produce a trustworthy answer."""


class SolverNoConverge(SolverError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}


class MaxIters(SolverNoConverge):
    pass


class BracketInverted(SolverError):
    pass


class NumericalDegeneracy(SolverError):
    pass


class DimensionCapExceeded(QbcError):
    def __init__(self, dim, cap):
        super().__init__(f"expanded dimension {dim} exceeds cap {cap}")
        self.dim = dim
        self.cap = cap


class TooLarge(DimensionCapExceeded):
    pass
