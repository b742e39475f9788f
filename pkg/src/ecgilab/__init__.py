"""Desk-scale electrocardiographic imaging laboratory.

Forward simulation on a 2D heart/torso ring, reconstruction of epicardial
extracellular potential and transmembrane voltage from body-surface data
with a thin-layer averaged source model, activation-map post-processing and
map error metrics.
"""

from .errors import (
    AssemblyError,
    ConfigError,
    EcgiError,
    GeometryError,
    NumericsError,
    ParameterError,
    StabilityError,
    UndefinedMetricError,
)
from .fields import METHODS, ActivationMap, TimeSeries

__version__ = "0.1.0"

__all__ = [
    "AssemblyError", "ConfigError", "EcgiError", "GeometryError", "NumericsError",
    "ParameterError", "StabilityError", "UndefinedMetricError",
    "METHODS", "ActivationMap", "TimeSeries",
]
