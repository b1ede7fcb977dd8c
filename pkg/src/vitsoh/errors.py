"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value or combination of values is invalid."""


class CoverageError(ValueError):
    """A requested window is not covered by the available data."""


class FormatError(ValueError):
    """An on-disk artifact does not match its expected format/version."""


class SimulationError(RuntimeError):
    """The battery simulation failed to reach a required state."""


class TrainingError(RuntimeError):
    """Training aborted (for example on a non-finite loss)."""
