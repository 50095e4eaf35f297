"""Exception types shared across the package."""


class NCDError(Exception):
    """Base class for all package errors."""


class StructureError(NCDError, ValueError):
    """Shapes or algebras do not conform."""


class DomainError(NCDError, ValueError):
    """An argument lies outside the domain of an operation.

    ``witness`` optionally carries the offending value (an eigenvalue,
    a defect norm, an element) so callers can report it.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
