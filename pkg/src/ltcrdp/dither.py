"""Voronoi-cell-uniform dithers and nested-lattice coset dithers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError
from .lattice import Lattice

COSET_CAP = 10**7


def mod_lattice(lattice: Lattice, x) -> np.ndarray:
    """Reduce ``x`` into the Voronoi cell: ``x - Q(x)``."""
    x = np.asarray(x, dtype=float)
    return x - lattice.quantize(x)


def sample_cell_uniform(lattice: Lattice, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw uniformly from the Voronoi cell of ``lattice``.

    A point uniform on the fundamental parallelepiped, reduced mod the lattice,
    is uniform on the Voronoi cell.
    """
    m = 1 if size is None else int(size)
    w = rng.random((m, lattice.dimension))
    u = mod_lattice(lattice, w @ lattice.generator)
    return u[0] if size is None else u


@dataclass(frozen=True, eq=False)
class NestedPair:
    """Self-similar nested pair: ``coarse = gamma * fine``."""

    coarse: Lattice
    fine: Lattice
    gamma: int

    @property
    def coset_count(self) -> int:
        return self.gamma**self.coarse.dimension

    @property
    def shared_randomness_rate(self) -> float:
        """Bits of shared randomness per dimension, log2(gamma)."""
        return math.log2(self.gamma)

    @cached_property
    def representatives(self) -> np.ndarray:
        return coset_representatives(self)


def nested_pair(coarse: Lattice, gamma: int, cap: int = COSET_CAP) -> NestedPair:
    gamma = int(gamma)
    if gamma < 1:
        raise ConfigError(f"nesting ratio must be a positive integer, got {gamma}")
    if gamma**coarse.dimension > cap:
        raise ConfigError(
            f"gamma^n = {gamma}^{coarse.dimension} exceeds the coset enumeration cap {cap}"
        )
    return NestedPair(coarse, coarse.scaled(1.0 / gamma), gamma)


def coset_representatives(nested: NestedPair, cap: int = COSET_CAP) -> np.ndarray:
    """The fine-lattice points inside the coarse Voronoi cell, one per coset.

    Enumerates ``k @ G / gamma`` for ``k`` in ``{0..gamma-1}^n`` and reduces each
    mod the coarse lattice.  Row ``i`` belongs to the i-th ``k`` in
    lexicographic order, which fixes the coset index convention.
    """
    n = nested.coarse.dimension
    count = nested.coset_count
    if count > cap:
        raise ConfigError(f"{count} cosets exceed the enumeration cap {cap}")
    if nested.gamma == 1:
        return np.zeros((1, n))
    grid = np.indices((nested.gamma,) * n).reshape(n, -1).T
    pts = grid @ nested.fine.generator
    return mod_lattice(nested.coarse, pts)


def sample_coset_uniform(nested: NestedPair, rng: np.random.Generator, size: int | None = None):
    """Draw coset indices uniformly and return ``(index, representative)``.

    With a single coset no random numbers are consumed, so a gamma=1 pair leaves
    the generator untouched.
    """
    m = 1 if size is None else int(size)
    if nested.coset_count == 1:
        idx = np.zeros(m, dtype=np.int64)
    else:
        idx = rng.integers(0, nested.coset_count, size=m)
    vec = nested.representatives[idx]
    if size is None:
        return int(idx[0]), vec[0]
    return idx, vec
