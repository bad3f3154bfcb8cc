"""Exception types shared across the package."""


class VrnnPlanError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(VrnnPlanError, ValueError):
    """Dimension mismatch between arrays."""


class ConfigError(VrnnPlanError, ValueError):
    """Invalid configuration, run spec, or file contents."""


class NumericalError(VrnnPlanError, RuntimeError):
    """Non-finite values where finite ones are required."""


class TrainingDiverged(NumericalError):
    """Training loss became non-finite; carries the epoch index."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"loss became non-finite at epoch {epoch}")


class PlanFailed(NumericalError):
    """Every plan candidate was dropped due to a non-finite objective."""


class GenerationError(VrnnPlanError, RuntimeError):
    """Trajectory generation could not satisfy its constraints."""
