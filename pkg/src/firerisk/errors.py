"""Exception types shared across the package."""


class FireRiskError(Exception):
    pass


class DimensionError(FireRiskError, ValueError):
    pass


class ConfigError(FireRiskError, ValueError):
    pass


class ArgumentError(FireRiskError, ValueError):
    pass


class StateError(FireRiskError, RuntimeError):
    pass


class TrainingError(FireRiskError, RuntimeError):
    pass


class FormatError(FireRiskError, ValueError):
    """Malformed container file. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConsistencyError(FireRiskError, ValueError):
    """Bundle and dataset do not belong together."""
