"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class DomainError(ValueError):
    """Input is outside the mathematical domain of an operation."""


class GraphError(ValueError):
    """A graph violates a structural invariant."""


class ConfigError(ValueError):
    """A configuration value is missing, unknown, or out of range."""


class TrainingError(RuntimeError):
    """Training produced a non-finite value or broke a training contract."""


class CheckpointError(RuntimeError):
    """A checkpoint file is corrupt, truncated, or incompatible."""
