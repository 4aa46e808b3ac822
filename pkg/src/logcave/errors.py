"""Exception types shared across the package."""


class LogcaveError(Exception):
    """Base class for all package-specific errors."""


class DegenerateData(LogcaveError):
    """The data points are affinely dependent; no full-dimensional hull exists."""


class DuplicatePoints(LogcaveError):
    """Two input points coincide."""

    def __init__(self, pairs):
        self.pairs = list(pairs)
        super().__init__(f"duplicate input points at index pairs {self.pairs}")


class EmptyGrid(LogcaveError):
    """No lattice point of the requested grid falls inside the hull."""


class Infeasible(LogcaveError):
    """The query point lies outside the convex hull: E(x) is empty."""


class NoConvergence(LogcaveError):
    """An iterative solver exceeded its iteration cap."""


class NumericalInstability(LogcaveError):
    """A closed-form evaluation lost all significant digits."""


class NonFiniteIterate(LogcaveError):
    """An optimizer iterate became NaN or infinite."""


class DomainViolation(LogcaveError):
    """A tent value left the valid domain of the generalized objective."""


class ParseError(LogcaveError):
    """A data file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
