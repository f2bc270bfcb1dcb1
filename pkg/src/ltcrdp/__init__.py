"""Lattice transform coding under rate-distortion-perception constraints.

Submodules are imported lazily so that the command-line entry point can apply
thread-count settings before numpy loads.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "Family": "lattice", "Lattice": "lattice", "LatticePoint": "lattice", "build_lattice": "lattice",
    "nearest_point": "lattice", "volume": "lattice",
    "CodecConfig": "codec", "Mode": "codec", "evaluate": "codec", "encode": "codec", "decode": "codec",
    "GaussianSpec": "metrics", "gaussian_rdp": "metrics",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(importlib.import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(name)
