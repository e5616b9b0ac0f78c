"""Exception types shared across the package."""


class EccError(Exception):
    """Base class for all eccnet errors."""


class DimensionError(EccError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(EccError, ValueError):
    """A documented precondition was violated."""


class ConsistencyError(EccError, ValueError):
    """Cached or derived data no longer matches its source."""


class ConfigurationError(EccError, ValueError):
    """A network or pyramid configuration is invalid."""


class CoarseningError(EccError, RuntimeError):
    """Graph coarsening could not produce a valid reduced graph."""


class BatchingError(EccError, ValueError):
    """Samples cannot be combined into one batch."""


class StratificationError(EccError, ValueError):
    """A cross-validation fold lost all samples of some class."""


class LoadError(EccError, ValueError):
    """A dataset file is missing or malformed."""
