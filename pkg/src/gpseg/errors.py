class ConfigurationError(ValueError):
    """Invalid domain, parameter or run configuration."""


class DimensionError(ValueError):
    """A field does not match the grid it is used with."""


class SolverError(RuntimeError):
    """A linear or nonlinear solve failed."""


class NotFoundError(SolverError):
    """Deflation produced no new solution within the iteration budget."""
