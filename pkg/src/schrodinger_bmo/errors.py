"""Exception taxonomy shared by all modules."""


class GeometryError(ValueError):
    """A cube, ball or box does not meet its geometric preconditions."""


class ResolutionError(ValueError):
    """A requested scale is finer than the grid can resolve."""


class ConvergenceError(RuntimeError):
    """A quadrature did not converge under node doubling."""


class DomainError(ValueError):
    """Input data violates a domain constraint (e.g. a negative potential)."""


class DegenerateInputError(ValueError):
    """An operation received an input it flags as degenerate (e.g. f == 0)."""
