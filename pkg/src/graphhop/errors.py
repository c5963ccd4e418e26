"""Exception hierarchy shared by all graphhop modules."""


class GraphHopError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(GraphHopError, ValueError):
    """An argument violates a documented precondition."""


class GraphError(ValidationError):
    """Graph construction failed (bad node id, ragged attributes, ...)."""


class CapacityError(GraphHopError):
    """A dense routine was asked to handle a problem above its size guard."""


class SolverError(GraphHopError):
    """A linear system could not be solved."""


class DataError(GraphHopError):
    """Malformed or missing dataset files.

    ``path`` and ``line`` locate the problem when it is tied to a file.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class NumericalError(GraphHopError, ArithmeticError):
    """Training produced a non-finite value."""

    def __init__(self, message, rows=None):
        self.rows = rows
        super().__init__(message)
