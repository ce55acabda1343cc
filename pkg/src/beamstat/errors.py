"""Exception types raised across the package."""


class BeamstatError(Exception):
    """Base class for all package errors."""


class BadDimension(BeamstatError, ValueError):
    pass


class BadFineFactor(BeamstatError, ValueError):
    pass


class TooManyUsersPerRoot(BeamstatError, ValueError):
    pass


class BlockOverflow(BeamstatError, ValueError):
    pass


class BadRoot(BeamstatError, ValueError):
    pass


class BadSize(BeamstatError, ValueError):
    pass


class LayoutMismatch(BeamstatError, ValueError):
    """Stacked and per-user layouts disagree."""


class NonpositiveModel(BeamstatError, ArithmeticError):
    """The fitted moment model has an entry <= 0, so the KL divergence is undefined."""


class ScaleTooLarge(BeamstatError, MemoryError):
    pass


class SolverDiverged(BeamstatError, RuntimeError):
    pass


class ZeroTruth(BeamstatError, ZeroDivisionError):
    pass
