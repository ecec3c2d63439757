"""Exception types raised across the package."""


class EigenGameError(Exception):
    """Base class for all package errors."""


class ShapeError(EigenGameError, ValueError):
    """Operand dimensions do not agree."""


class DomainError(EigenGameError, ValueError):
    """Argument lies outside the domain of the operation (e.g. non-unit vector)."""


class ConvergenceError(EigenGameError, RuntimeError):
    pass


class DegenerateStepError(EigenGameError, ArithmeticError):
    """A retraction was asked to normalize a (numerically) zero vector."""


class RankError(EigenGameError, ValueError):
    def __init__(self, message: str, rank: int):
        super().__init__(message)
        self.rank = rank


class SingularPenaltyError(EigenGameError, ArithmeticError):
    """A ratio-form penalty hit a vanishing denominator <v_j, Σ v_j>."""

    def __init__(self, message: str, parent: int):
        super().__init__(message)
        self.parent = parent


class ConfigError(EigenGameError, ValueError):
    pass


class ParseError(EigenGameError, ValueError):
    """Malformed input file. ``position`` is a byte offset or a 1-based line number."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position
