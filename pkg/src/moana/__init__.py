"""moana: online 3D multi-object tracking with adaptive appearance models.

Submodules are imported lazily so the command-line entry point can cap
numeric-library thread pools before the numeric stack loads.
"""

from importlib import import_module

__version__ = "0.1.0"

_SUBMODULES = (
    "appearance",
    "association",
    "cli",
    "config",
    "errors",
    "features",
    "geometry",
    "ingest",
    "kalman",
    "metrics",
    "pipeline",
    "property_model",
    "render",
    "synth",
)

__all__ = list(_SUBMODULES) + ["__version__"]


def __getattr__(name: str):
    if name in _SUBMODULES:
        return import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
