"""Exception hierarchy shared by all modules."""


class TransflowError(Exception):
    """Base class for every error raised by the package."""


class SingularMetric(TransflowError):
    """A nodal determinant of the transverse metric fell below the floor."""


class ModeUnsupported(TransflowError):
    """Operation requires the symmetric (exact, taut-class) mode."""


class NoConvergence(TransflowError):
    """An iterative solver hit its iteration cap."""


class NonPositive(TransflowError):
    """A field that must stay positive lost positivity."""


class UnknownScenario(TransflowError, KeyError):
    pass


class CheckpointError(TransflowError):
    """Malformed, truncated or corrupted checkpoint/field file."""


class ConfigError(TransflowError, ValueError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
