"""Exception hierarchy.

``ValidationError`` subclasses signal bad inputs (CLI exit code 2);
``CheckFailure`` subclasses signal a failed verification (exit code 3).
"""


class VmsError(Exception):
    pass


class ValidationError(VmsError, ValueError):
    pass


class CheckFailure(VmsError):
    pass


class ShapeMismatch(ValidationError):
    pass


class NonFiniteError(VmsError, ArithmeticError):
    pass


class NonPositiveDelta(ValidationError):
    pass


class NonNegativeA(ValidationError):
    pass


class TimeVaryingParams(ValidationError):
    pass


class OddInnerWidth(ValidationError):
    pass


class EmptyVideo(ValidationError):
    pass


class LayoutMismatch(ValidationError):
    pass


class InsufficientPoints(ValidationError):
    pass


class BudgetExceeded(VmsError):
    pass


class RatioMismatch(CheckFailure):
    pass


class DivergedLoss(CheckFailure):
    pass


class GoldenMismatch(CheckFailure):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}
