"""Exception taxonomy shared across the package."""


class StratfairError(Exception):
    """Base class for all package-specific errors."""


class InputError(StratfairError):
    """Malformed caller input: dimension mismatch, bad flag value, bad grid."""


class StructuralError(StratfairError):
    """Model-structure violation: cyclic graph, singular cost matrix."""


class CapacityError(StratfairError):
    """Requested computation exceeds a hard size cap."""


class NumericError(StratfairError):
    """An iterative routine failed to converge to its target residual."""


class ContractError(StratfairError):
    """A precondition that the caller must establish was not met."""


class ConfigError(StratfairError):
    """Scenario/run configuration file could not be interpreted."""


class IngestionError(StratfairError):
    """Dataset file rejected: unknown column, unparseable cell, missing value."""


class SplitError(StratfairError):
    """Group split rule produced an empty part."""


class FitError(StratfairError):
    """Ground-truth fit impossible (e.g. degenerate labels)."""
