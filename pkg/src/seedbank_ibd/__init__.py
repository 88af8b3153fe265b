"""Identity by descent in a multi-colony Wright-Fisher model with seed-banks."""

from .core import (
    INFINITE,
    NEAREST_NEIGHBOUR,
    MigrationKernel,
    ModelParams,
    ParameterError,
    TorusSpec,
)

__version__ = "0.1.0"

__all__ = [
    "INFINITE",
    "NEAREST_NEIGHBOUR",
    "MigrationKernel",
    "ModelParams",
    "ParameterError",
    "TorusSpec",
]
