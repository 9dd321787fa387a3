"""Control toolkit for a finite-dimensional ciliated micro-swimmer model."""

from .config import Config, Tolerances
from .core import (BodyState, FullState, KinematicModel, SphericalModel, SwimmerModel,
                   ValidationError, drift_E, j_inner, skew, vee)

__all__ = [
    "Config", "Tolerances", "BodyState", "FullState", "KinematicModel", "SphericalModel",
    "SwimmerModel", "ValidationError", "drift_E", "j_inner", "skew", "vee",
]
__version__ = "0.1.0"
