"""Exception hierarchy for granulite."""


class GranuliteError(Exception):
    """Base class for all granulite errors."""


class InputError(GranuliteError, ValueError):
    """A caller-supplied value is outside its documented domain."""


class DegeneratePairError(GranuliteError):
    """Raised when a collision is requested for a pair with zero relative velocity."""


class ConfigError(GranuliteError):
    """A simulation configuration is invalid or fails runtime validation."""


class ScenarioError(GranuliteError):
    """A scenario file could not be parsed or validated.

    The message always names the offending key.
    """


class ConvergenceError(GranuliteError):
    """A run did not reach the requested statistical state within its budget."""


class MeasurementQualityError(GranuliteError):
    """A fitted quantity failed its quality gate (e.g. r^2 too low)."""


class CheckpointError(GranuliteError):
    """A checkpoint file is malformed or has an unsupported version."""
