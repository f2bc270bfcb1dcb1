"""Deterministic RNG substreams.

A stream is identified by ``(master_seed, crc32(module_name), index)`` and fed
to :class:`numpy.random.SeedSequence`, so any single stream can be recreated in
isolation from the master seed.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream_key(master_seed: int, module: str, index: int = 0) -> tuple[int, int, int]:
    return (int(master_seed), zlib.crc32(module.encode("utf-8")), int(index))


def substream(master_seed: int, module: str, index: int = 0) -> np.random.Generator:
    """Generator for the ``index``-th stream owned by ``module``."""
    return np.random.default_rng(np.random.SeedSequence(list(stream_key(master_seed, module, index))))
