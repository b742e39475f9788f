"""Exception hierarchy shared across the package."""


class EcgiError(Exception):
    """Base class for all package errors."""


class GeometryError(EcgiError):
    """Mesh topology or point-location failure."""


class AssemblyError(EcgiError):
    """Finite-element assembly failure (e.g. a degenerate element)."""


class ParameterError(EcgiError, ValueError):
    """A physical or numerical parameter is outside its admissible range."""


class ConfigError(ParameterError):
    """Invalid configuration document.

    ``field`` holds the dotted path of the offending entry when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class StabilityError(EcgiError):
    """Time integration diverged."""


class NumericsError(EcgiError):
    """Singular or otherwise unusable linear system."""


class UndefinedMetricError(EcgiError, ValueError):
    """A metric is undefined for the given inputs (zero norm / zero variance)."""
