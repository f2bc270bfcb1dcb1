"""Lattices with exact closest-point decoders and Monte-Carlo geometry.

Supported families are the integer lattice Z^n, the checkerboard lattice D_n,
its dual D_n^*, the Gosset lattice E_8 and the Barnes-Wall lattice Lambda_16.
Every decoder returns the exact minimiser of ||lambda - x||.  Boundary ties are
broken deterministically: among equidistant lattice points the one whose
embedding is lexicographically largest wins.  For Z^n this is round-half-up
per coordinate.

Generators are stored row-wise, so a lattice point with integer coordinates
``k`` has embedding ``k @ generator``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, InputError, OracleError

# Two squared distances closer than this (in the unscaled frame) count as a tie.
TIE_TOL = 1e-9

ENUMERATION_CAP = 2_000_000


class Family(str, enum.Enum):
    INTEGER = "IntegerZ"
    DN = "DnChecker"
    DN_DUAL = "DnDual"
    E8 = "E8"
    BW16 = "BarnesWall16"

    @classmethod
    def parse(cls, name: "str | Family") -> "Family":
        if isinstance(name, Family):
            return name
        key = str(name).strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "integerz": cls.INTEGER, "z": cls.INTEGER, "zn": cls.INTEGER, "integer": cls.INTEGER,
            "dnchecker": cls.DN, "dn": cls.DN, "d": cls.DN,
            "dndual": cls.DN_DUAL, "dn*": cls.DN_DUAL, "dnstar": cls.DN_DUAL,
            "e8": cls.E8,
            "barneswall16": cls.BW16, "bw16": cls.BW16, "lambda16": cls.BW16,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ConfigError(f"unknown lattice family {name!r}") from None


@dataclass(frozen=True)
class LatticePoint:
    """Integer basis coordinates together with the embedded point.

    Both arrays are either 1-D (a single point) or 2-D (one point per row).
    """

    coords: np.ndarray
    embedding: np.ndarray


@dataclass(frozen=True, eq=False)
class Lattice:
    family: Family
    dimension: int
    scale: float
    generator: np.ndarray

    def __repr__(self) -> str:
        return f"Lattice({self.family.value}, n={self.dimension}, scale={self.scale:g})"

    @property
    def n(self) -> int:
        return self.dimension

    def scaled(self, factor: float) -> "Lattice":
        """The lattice ``factor * self``."""
        return build_lattice(self.family, self.dimension, self.scale * factor)

    @cached_property
    def _inverse_generator(self) -> np.ndarray:
        return np.linalg.inv(self.generator)

    def quantize(self, x: np.ndarray) -> np.ndarray:
        """Embeddings of the closest lattice points to each row of ``x``."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        z = np.atleast_2d(x) / self.scale
        out = _DECODERS[self.family](z) * self.scale
        return out[0] if single else out

    def coordinates(self, points: np.ndarray) -> np.ndarray:
        """Integer coordinates ``k`` with ``k @ generator == points``.

        Raises InputError if a point is not on the lattice (tolerance 1e-9).
        """
        points = np.asarray(points, dtype=float)
        k = points @ self._inverse_generator
        kr = np.rint(k)
        if np.any(np.abs(k - kr) > 1e-9):
            raise InputError("point is not a lattice point")
        return kr.astype(np.int64)

    def embed(self, coords: np.ndarray) -> np.ndarray:
        return np.asarray(coords, dtype=float) @ self.generator


# --------------------------------------------------------------------------- #
# construction


def _reed_muller_1_4() -> np.ndarray:
    """All 32 codewords of the first-order Reed-Muller code RM(1,4)."""
    bits = (np.arange(16)[:, None] >> np.arange(4)) & 1
    words = []
    for a0 in (0, 1):
        for a in range(16):
            coeff = (a >> np.arange(4)) & 1
            words.append((a0 + bits @ coeff) % 2)
    return np.array(words, dtype=float)


def _integer_row_basis(vectors: np.ndarray) -> np.ndarray:
    """Basis of the integer lattice spanned by the rows of ``vectors``."""
    rows = [[int(v) for v in row] for row in vectors]
    n = len(rows[0])
    basis = []
    for col in range(n):
        active = [r for r in rows if r[col] != 0]
        rest = [r for r in rows if r[col] == 0]
        while len(active) > 1:
            active.sort(key=lambda r: abs(r[col]))
            piv = active[0]
            reduced = [piv]
            for r in active[1:]:
                q = r[col] // piv[col]
                r = [a - q * b for a, b in zip(r, piv)]
                (reduced if r[col] != 0 else rest).append(r)
            active = reduced
        if not active:
            raise ConfigError("generating set is rank deficient")
        basis.append(active[0])
        rows = [r for r in rest if any(r)]
    return np.array(basis, dtype=float)


def _canonical_generator(family: Family, n: int) -> np.ndarray:
    if family is Family.INTEGER:
        return np.eye(n)
    if family is Family.DN:
        g = np.zeros((n, n))
        g[0, :2] = [-1, -1]
        for i in range(1, n):
            g[i, i - 1], g[i, i] = 1, -1
        return g
    if family is Family.DN_DUAL:
        g = np.eye(n)
        g[-1] = 0.5
        return g
    if family is Family.E8:
        g = np.zeros((8, 8))
        g[0, 0] = 2
        for i in range(1, 7):
            g[i, i - 1], g[i, i] = -1, 1
        g[7] = 0.5
        return g
    if family is Family.BW16:
        d16 = _canonical_generator(Family.DN, 16)
        rm = _reed_muller_1_4()
        return _integer_row_basis(np.vstack([2 * d16, rm]))
    raise ConfigError(f"unsupported family {family}")


def build_lattice(family: "str | Family", n: int, scale: float = 1.0) -> Lattice:
    """Build a named lattice, ``scale`` times its canonical generator."""
    family = Family.parse(family)
    n = int(n)
    if family is Family.E8 and n != 8:
        raise ConfigError(f"E8 requires n=8, got n={n}")
    if family is Family.BW16 and n != 16:
        raise ConfigError(f"BarnesWall16 requires n=16, got n={n}")
    if family in (Family.DN, Family.DN_DUAL) and n < 2:
        raise ConfigError(f"{family.value} requires n >= 2, got n={n}")
    if n < 1:
        raise ConfigError("dimension must be positive")
    if not (np.isfinite(scale) and scale > 0):
        raise ConfigError(f"scale must be positive and finite, got {scale}")
    g = _canonical_generator(family, n) * float(scale)
    g.setflags(write=False)
    return Lattice(family, n, float(scale), g)


# --------------------------------------------------------------------------- #
# decoders (unscaled canonical frame, 2-D input)


def _round_half_up(z: np.ndarray) -> np.ndarray:
    return np.floor(z + 0.5 + TIE_TOL / 2)


def _lex_greater(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a != b
    first = np.argmax(diff, axis=1)
    rows = np.arange(len(a))
    return diff.any(axis=1) & (a[rows, first] > b[rows, first])


def _decode_zn(z: np.ndarray) -> np.ndarray:
    return _round_half_up(z)


def _decode_dn(z: np.ndarray) -> np.ndarray:
    """Conway-Sloane D_n decoder with the lexicographic tie rule in closed form.

    Round half up; if the coordinate sum is odd, one coordinate must move.
    A coordinate sitting exactly on .5 moves for free, and moving the last such
    one down keeps the result lexicographically largest.  Otherwise move the
    coordinate with the largest residual towards ``z``; among equal residuals
    prefer the first upward move, else the last downward one.
    """
    f = _round_half_up(z)
    odd = np.mod(f.sum(axis=1), 2) != 0
    if not np.any(odd):
        return f
    n = z.shape[1]
    fo = f[odd]
    r = z[odd] - fo
    rows = np.arange(len(fo))
    tie = r <= -0.5 + TIE_TOL / 2
    has_tie = tie.any(axis=1)
    last_tie = n - 1 - np.argmax(tie[:, ::-1], axis=1)
    a = np.abs(r)
    best = a >= a.max(axis=1, keepdims=True) - TIE_TOL / 2
    up = best & (r >= 0)
    has_up = up.any(axis=1)
    first_up = np.argmax(up, axis=1)
    last_best = n - 1 - np.argmax(best[:, ::-1], axis=1)
    k = np.where(has_tie, last_tie, np.where(has_up, first_up, last_best))
    step = np.where(~has_tie & has_up, 1.0, -1.0)
    fo[rows, k] += step
    f[odd] = fo
    return f


def _decode_union(z: np.ndarray, base, glue: np.ndarray) -> np.ndarray:
    """Decode in the union of cosets ``glue_j + base``; base decoder breaks in-coset ties."""
    best = None
    best_d = None
    for g in glue:
        cand = g + base(z - g)
        d = np.sum((z - cand) ** 2, axis=1)
        if best is None:
            best, best_d = cand, d
            continue
        closer = d < best_d - TIE_TOL
        tied = (np.abs(d - best_d) <= TIE_TOL) & _lex_greater(cand, best)
        take = closer | tied
        best[take] = cand[take]
        best_d = np.where(closer, d, best_d)
    return best


def _decode_dn_dual(z: np.ndarray) -> np.ndarray:
    n = z.shape[1]
    return _decode_union(z, _decode_zn, np.array([np.zeros(n), np.full(n, 0.5)]))


def _decode_e8(z: np.ndarray) -> np.ndarray:
    return _decode_union(z, _decode_dn, np.array([np.zeros(8), np.full(8, 0.5)]))


_RM14 = _reed_muller_1_4()


def _decode_bw16(z: np.ndarray) -> np.ndarray:
    return _decode_union(z, lambda w: 2.0 * _decode_dn(w / 2.0), _RM14)


_DECODERS = {
    Family.INTEGER: _decode_zn,
    Family.DN: _decode_dn,
    Family.DN_DUAL: _decode_dn_dual,
    Family.E8: _decode_e8,
    Family.BW16: _decode_bw16,
}


# --------------------------------------------------------------------------- #
# public operations


def _check_vector(lattice: Lattice, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != lattice.dimension or x.ndim > 2:
        raise InputError(f"expected vectors of length {lattice.dimension}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("input contains non-finite values")
    return x


def nearest_point(lattice: Lattice, x) -> LatticePoint:
    """Closest lattice point to ``x`` (a vector or a batch of row vectors)."""
    x = _check_vector(lattice, x)
    emb = lattice.quantize(x)
    return LatticePoint(lattice.coordinates(emb), emb)


def enumerate_generator(B: np.ndarray, center: np.ndarray, radius: float, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Integer coordinates of every point of the lattice spanned by the rows of ``B``
    within ``radius`` of ``center`` (Fincke-Pohst, breadth first)."""
    n = B.shape[0]
    q, r = np.linalg.qr(B.T)
    y = q.T @ center
    r2 = float(radius) ** 2
    slack = 1e-12 * max(1.0, r2)
    coords = np.zeros((1, 0))
    partial = np.zeros(1)
    for i in range(n - 1, -1, -1):
        shift = coords @ r[i, i + 1:] if coords.shape[1] else np.zeros(len(partial))
        rii = r[i, i]
        c = (y[i] - shift) / rii
        half = np.sqrt(np.maximum(r2 - partial, 0.0)) / abs(rii)
        lo = np.ceil(c - half - 1e-12)
        hi = np.floor(c + half + 1e-12)
        cnt = np.maximum(hi - lo + 1, 0).astype(np.int64)
        total = int(cnt.sum())
        if total > cap:
            raise ConfigError(f"enumeration exceeds cap of {cap} candidates")
        parent = np.repeat(np.arange(len(cnt)), cnt)
        offset = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        ki = lo[parent] + offset
        pd = partial[parent] + (rii * ki + shift[parent] - y[i]) ** 2
        keep = pd <= r2 + slack
        coords = np.column_stack([ki[keep], coords[parent[keep]]])
        partial = pd[keep]
    return coords.astype(np.int64)


def enumerate_ball(lattice: Lattice, center, radius: float, cap: int = ENUMERATION_CAP) -> LatticePoint:
    """All lattice points within ``radius`` of ``center``.

    Works from the generator alone, so it is independent of the fast decoders.
    """
    center = _check_vector(lattice, center)
    if center.ndim != 1:
        raise InputError("enumerate_ball takes a single center")
    coords = enumerate_generator(lattice.generator, center, radius, cap)
    return LatticePoint(coords, coords @ lattice.generator)


def nearest_point_oracle(lattice: Lattice, x, radius: float) -> LatticePoint:
    """Brute-force closest point by enumerating every lattice point within ``radius``.

    Applies the same tie rule as the fast decoders (lexicographically largest
    embedding among points whose squared distances agree within TIE_TOL).
    """
    x = _check_vector(lattice, x)
    found = enumerate_ball(lattice, x, radius)
    if len(found.coords) == 0:
        raise OracleError(f"no lattice point within radius {radius}; retry with a larger radius")
    d = np.sum((found.embedding - x) ** 2, axis=1) / lattice.scale**2
    tied = np.flatnonzero(d <= d.min() + TIE_TOL)
    best = tied[0]
    for i in tied[1:]:
        if tuple(found.embedding[i]) > tuple(found.embedding[best]):
            best = i
    return LatticePoint(found.coords[best], found.embedding[best])


def volume(lattice: Lattice) -> float:
    """Cell volume |det G|."""
    sign, logdet = np.linalg.slogdet(lattice.generator)
    return float(math.exp(logdet))


def _sum_chunks(fn, num_samples: int, rng, chunk: int = 100_000):
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < num_samples:
        m = min(chunk, num_samples - done)
        v = fn(m, rng)
        total += float(v.sum())
        total_sq += float(np.square(v).sum())
        done += m
    mean = total / num_samples
    var = max(total_sq / num_samples - mean**2, 0.0) * num_samples / (num_samples - 1)
    return mean, math.sqrt(var / num_samples)


def second_moment_mc(lattice: Lattice, num_samples: int, rng) -> tuple[float, float]:
    """Monte-Carlo estimate of sigma^2(Lambda) = E||u||^2 / n with its standard error."""
    from .dither import sample_cell_uniform

    if num_samples < 1000:
        raise ConfigError("second_moment_mc needs at least 1000 samples")

    def per_dim_energy(m, g):
        u = sample_cell_uniform(lattice, g, size=m)
        return np.sum(u * u, axis=1) / lattice.dimension

    return _sum_chunks(per_dim_energy, int(num_samples), rng)


def nsm_mc(lattice: Lattice, num_samples: int, rng) -> tuple[float, float]:
    """Normalized second moment G = sigma^2 / V^(2/n) with its standard error."""
    m, se = second_moment_mc(lattice, num_samples, rng)
    norm = volume(lattice) ** (2.0 / lattice.dimension)
    return m / norm, se / norm
