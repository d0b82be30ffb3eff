"""Exception types raised across the package."""


class MsplidarError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(MsplidarError):
    """A configuration value is out of range or internally inconsistent."""


class InvalidSirError(MsplidarError):
    """An impulse response is unusable (all-zero, negative entries, ...)."""


class InvalidSceneError(MsplidarError):
    """A ground-truth scene cannot be represented in the histogram window."""


class FileFormatError(MsplidarError):
    """A binary cube, map, or point-cloud file failed validation on load."""


class ConfigFileError(MsplidarError):
    """A run-configuration file could not be parsed into a full valid config."""


class UndefinedMetricError(MsplidarError):
    """A metric has no defined value (empty target mask, zero reference mass)."""


class NumericalFailureError(MsplidarError):
    """A solver field turned non-finite; names the field and the sweep."""

    def __init__(self, field: str, iteration: int):
        self.field = field
        self.iteration = iteration
        super().__init__(f"non-finite values in '{field}' at iteration {iteration}")
