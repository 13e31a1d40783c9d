"""Exception hierarchy shared by every module of the package."""


class SolidAngleError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(SolidAngleError, ValueError):
    pass


class AsymmetricMatrix(SolidAngleError, ValueError):
    pass


class ZeroVector(SolidAngleError, ValueError):
    pass


class RankDeficient(SolidAngleError, ValueError):
    pass


class NotFullDim(SolidAngleError, ValueError):
    pass


class EmptyCone(SolidAngleError, ValueError):
    pass


class DegenerateHyperplane(SolidAngleError, ValueError):
    pass


class AllOrthogonal(SolidAngleError, ValueError):
    """Every generator is orthogonal to the last one; no line decomposition applies."""


class NotPositiveDefinite(SolidAngleError, ValueError):
    """The associated matrix is not positive definite, so the series diverges."""


class NotOrthogonal(SolidAngleError, ValueError):
    pass


class WrongDimension(SolidAngleError, ValueError):
    pass


class ZeroDenominator(SolidAngleError, ZeroDivisionError):
    pass


class NonFiniteTerm(SolidAngleError, ArithmeticError):
    pass


class BudgetExceeded(SolidAngleError, RuntimeError):
    """Raised when a series hits ``max_terms`` before reaching its target.

    The best partial result computed so far is attached as ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class RecursionLimit(SolidAngleError, RuntimeError):
    pass
