"""Exception hierarchy shared by all modules."""


class CensaddError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(CensaddError):
    """Input file does not have the expected columns."""


class ValidationError(CensaddError):
    """A value violates a domain constraint.

    Parameters
    ----------
    message : str
        Human readable description.
    row : int, optional
        1-based data row (header excluded) where the violation was found.
    """

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class DivergenceError(CensaddError):
    """An inverse-survival integral or weight diverges (G reaches 0)."""


class DegenerateDensityError(CensaddError):
    """A density estimate used as a divisor is not positive where needed."""


class ConsistencyError(CensaddError):
    """Two independent computations of the same quantity disagree."""


class QuadratureError(CensaddError):
    """Quadrature request outside the supported range."""
