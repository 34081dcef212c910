class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """Inconsistent or invalid configuration."""


class LayoutError(ValueError):
    """Slots do not fit the sampling grid."""


class SolverError(RuntimeError):
    """A root finder or quadrature failed to converge."""
