"""Exception types shared across the package."""


class MklarenError(Exception):
    """Base class for package errors."""


class InputError(MklarenError, ValueError):
    """Invalid arguments, shapes, or configuration."""


class DataError(MklarenError):
    """Unreadable or malformed data files."""


class NumericalError(MklarenError):
    """A numerical routine failed beyond recoverable tolerance."""


class DegeneratePivotError(NumericalError):
    """Requested pivot has (near-)zero residual diagonal; caller should skip it."""


class CollinearColumnsError(NumericalError):
    """Active columns are linearly dependent; the equiangular direction is undefined."""
