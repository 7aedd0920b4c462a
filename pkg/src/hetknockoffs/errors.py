"""Exception types shared across the package."""


class HetknockError(Exception):
    """Base class for library errors."""


class SchemaError(HetknockError):
    """Raised when data does not conform to its declared schema."""


class NumericalError(HetknockError):
    """Raised when a numerical routine cannot produce a valid result."""
