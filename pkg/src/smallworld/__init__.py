"""Random walks, meeting times and coalescence on small-world tori."""

__version__ = "0.1.0"

from .errors import SmallWorldError
from .topology import SmallWorldGraph, TorusSpec, sample_small_world
from .walk import TimeModel, WalkKernel

__all__ = [
    "SmallWorldError",
    "SmallWorldGraph",
    "TimeModel",
    "TorusSpec",
    "WalkKernel",
    "__version__",
    "sample_small_world",
]
