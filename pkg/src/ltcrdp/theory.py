"""Closed-form constructions for the Gaussian source and lattice-Gaussian diagnostics.

``sd_params`` gives the shared-dither construction (identity analysis map,
scalar synthesis map, lattice second moment) that meets a (D, P) target for a
N(0, sigma2) source.  ``pd_params`` gives the private-dither construction for
perfect realism without shared randomness.  The diagnostics sample lattice
Gaussians and probe the flatness factor.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .dither import sample_cell_uniform
from .errors import ConfigError, DomainError, InputError
from .lattice import ENUMERATION_CAP, Family, Lattice, LatticePoint, enumerate_generator, nearest_point, volume


class Branch(str, enum.Enum):
    PERCEPTION_ACTIVE = "PerceptionActive"
    PERCEPTION_INACTIVE = "PerceptionInactive"


@dataclass(frozen=True)
class SDConstruction:
    sigma2: float
    D: float
    P: float
    branch: Branch
    lattice_second_moment: float
    analysis_scale: float
    synthesis_scale: float


@dataclass(frozen=True)
class PDConstruction:
    sigma2: float
    D: float
    nu: float
    alpha: float
    beta: float
    s: float

    @property
    def lattice_second_moment(self) -> float:
        """Second moment of the lattice used on the scaled latent ``alpha * x``."""
        return (self.sigma2 - self.nu) * self.nu / self.sigma2

    @property
    def residual(self) -> float:
        return pd_constraint_residual(self.sigma2, self.nu, self.s, self.beta)


def sd_params(sigma2: float, D: float, P: float) -> SDConstruction:
    """Shared-dither construction meeting distortion ``D`` and perception ``P``.

    With ``x_hat = g * (x + u)`` and ``u`` of second moment ``eta2``, the
    perception-active branch fixes ``g`` so that ``x_hat`` has standard
    deviation ``sigma - sqrt(P)``; the inactive branch is the classical
    backward channel.
    """
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    if not 0 <= P <= sigma2:
        raise DomainError(f"P must lie in [0, sigma2], got {P}")
    if not 0 < D <= 2 * sigma2:
        raise DomainError(f"D must lie in (0, 2*sigma2], got {D}")
    sigma = math.sqrt(sigma2)
    if math.sqrt(P) < sigma - math.sqrt(abs(sigma2 - D)):
        a = (sigma - math.sqrt(P)) ** 2
        cov = 0.25 * (sigma2 + a - D) ** 2
        eta2 = sigma2 * (sigma2 * a / cov - 1.0) if cov > 0 else math.inf
        if not (0 < eta2 < math.inf):
            raise DomainError(
                f"perception-active branch needs a positive finite lattice second moment, got {eta2}"
            )
        return SDConstruction(sigma2, D, P, Branch.PERCEPTION_ACTIVE, eta2, 1.0,
                              (sigma - math.sqrt(P)) / math.sqrt(sigma2 + eta2))
    if D >= sigma2:
        raise DomainError(
            f"perception-inactive branch with D={D} >= sigma2={sigma2} is the zero-rate regime; "
            "no lattice second moment realizes it"
        )
    return SDConstruction(sigma2, D, P, Branch.PERCEPTION_INACTIVE, 1.0 / (1.0 / D - 1.0 / sigma2), 1.0,
                          (sigma2 - D) / sigma2)


def pd_params(sigma2: float, D: float) -> PDConstruction:
    """Private-dither construction: ``nu = D/2``, ``alpha = (sigma2 - nu)/sigma2``, ``beta = 1``."""
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    if not 0 < D < 2 * sigma2:
        raise DomainError(f"D must lie in (0, 2*sigma2), got {D}")
    nu = D / 2.0
    return PDConstruction(sigma2, D, nu, (sigma2 - nu) / sigma2, 1.0, math.sqrt(sigma2 / (sigma2 - nu)))


def pd_constraint_residual(sigma2: float, nu: float, s: float, beta: float) -> float:
    """Residual of the constraint ``(sigma2 - nu) + s^2 (sigma2 - nu) nu / sigma2 = sigma2 / beta^2``."""
    return (sigma2 - nu) + s**2 * (sigma2 - nu) * nu / sigma2 - sigma2 / beta**2


# --------------------------------------------------------------------------- #
# lattice Gaussians


def _gaussian_radius(sigma: float, n: int) -> float:
    # The tail of ||z|| beyond sigma * (sqrt(n) + 7) carries less than exp(-24.5) of
    # the mass; 8 sigma sqrt(n) is looser for n > 1 and explodes the enumeration.
    return sigma * min(8.0 * math.sqrt(n), math.sqrt(n) + 7.0)


def _discrete_gaussian_1d(center: float, sigma: float, spacing: float, rng, size: int) -> np.ndarray:
    r = 8.0 * sigma
    k = np.arange(math.floor((center - r) / spacing), math.ceil((center + r) / spacing) + 1)
    pts = k * spacing
    logw = -((pts - center) ** 2) / (2 * sigma**2)
    w = np.exp(logw - logw.max())
    return rng.choice(pts, size=size, p=w / w.sum())


def lattice_gaussian_sample(lattice: Lattice, center, sigma2: float, rng: np.random.Generator,
                            size: int | None = None, cap: int = ENUMERATION_CAP) -> LatticePoint:
    """Exact draws from the lattice Gaussian ``D_{Lambda, sigma, c}``.

    Enumerates every lattice point within the truncation radius, weights by
    ``exp(-||lambda - c||^2 / (2 sigma2))`` and samples categorically.  Z^n
    factorizes into independent 1-D discrete Gaussians.
    """
    if lattice.dimension > 16:
        raise ConfigError("lattice Gaussian sampling is limited to n <= 16")
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    c = np.asarray(center, dtype=float)
    if c.shape != (lattice.dimension,) or not np.all(np.isfinite(c)):
        raise InputError("center must be a finite vector of the lattice dimension")
    m = 1 if size is None else int(size)
    sigma = math.sqrt(sigma2)
    n = lattice.dimension
    if lattice.family is Family.INTEGER:
        emb = np.column_stack([_discrete_gaussian_1d(c[i], sigma, lattice.scale, rng, m) for i in range(n)])
    else:
        coords = enumerate_generator(lattice.generator, c, _gaussian_radius(sigma, n), cap)
        if len(coords) == 0:
            emb = np.repeat(nearest_point(lattice, c).embedding[None, :], m, axis=0)
        else:
            pts = coords @ lattice.generator
            logw = -np.sum((pts - c) ** 2, axis=1) / (2 * sigma2)
            w = np.exp(logw - logw.max())
            emb = pts[rng.choice(len(pts), size=m, p=w / w.sum())]
    if size is None:
        emb = emb[0]
    return LatticePoint(lattice.coordinates(emb), emb)


# --------------------------------------------------------------------------- #
# flatness factor


@dataclass(frozen=True)
class FlatnessEstimate:
    """Probe-based lower bound on the flatness factor."""

    value: float
    gamma: float
    argmax: np.ndarray
    n_probes: int
    method: str
    truncation_bound: float
    lower_bound: bool = True


def _periodized_1d(x: np.ndarray, gamma: float, spacing: float) -> np.ndarray:
    """``V * sum_k f_gamma(x - k * spacing) - 1`` for scalar lattices, vectorized over x."""
    if gamma / spacing > 0.5:
        # Poisson summation converges fast for wide Gaussians.
        j = np.arange(1, int(math.ceil(3.0 * spacing / gamma)) + 2)
        terms = np.exp(-2 * math.pi**2 * gamma**2 * (j / spacing) ** 2)
        return 2 * np.sum(terms * np.cos(2 * math.pi * np.outer(x, j) / spacing), axis=1)
    r = 12.0 * gamma + spacing
    k = np.arange(math.floor(-r / spacing) - 1, math.ceil(r / spacing) + 2) * spacing
    z = x[:, None] - k[None, :]
    dens = np.exp(-(z**2) / (2 * gamma**2)) / (math.sqrt(2 * math.pi) * gamma)
    return spacing * dens.sum(axis=1) - 1.0


def _dual_generator(lattice: Lattice) -> np.ndarray:
    return np.linalg.inv(lattice.generator).T


def periodized_gaussian(lattice: Lattice, x: np.ndarray, gamma: float, cap: int = ENUMERATION_CAP,
                        method: str = "auto") -> tuple[np.ndarray, str, float]:
    """``V * rho_{gamma, Lambda}(x) - 1`` for each row of ``x``.

    ``method`` picks the direct lattice sum (``"primal"``), its Poisson dual
    (``"dual"``) or whichever needs fewer terms (``"auto"``).  Also returns the
    method used and a rough truncation bound.
    """
    n = lattice.dimension
    V = volume(lattice)
    primal_r = gamma * (math.sqrt(n) + 8.0)
    dual_r = math.sqrt(40.0) / (math.pi * gamma * math.sqrt(2.0))
    # Rough point counts decide which side of the Poisson sum is cheaper.
    unit_ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    primal_count = unit_ball * (primal_r + 1) ** n / V
    dual_count = unit_ball * dual_r**n * V
    out = np.empty(len(x))
    if method not in ("auto", "primal", "dual"):
        raise ConfigError(f"unknown summation method {method!r}")
    if method == "primal" or (method == "auto" and primal_count <= dual_count):
        norm = V / (math.sqrt(2 * math.pi) * gamma) ** n
        for i, xi in enumerate(x):
            coords = enumerate_generator(lattice.generator, xi, primal_r, cap)
            d2 = np.sum((coords @ lattice.generator - xi) ** 2, axis=1)
            out[i] = norm * np.exp(-d2 / (2 * gamma**2)).sum() - 1.0
        return out, "primal", float(chi2.sf((primal_r / gamma - 1.0) ** 2, n))
    B = _dual_generator(lattice)
    coords = enumerate_generator(B, np.zeros(n), dual_r, cap)
    w = coords @ B
    nz = np.any(coords != 0, axis=1)
    w = w[nz]
    weights = np.exp(-2 * math.pi**2 * gamma**2 * np.sum(w * w, axis=1))
    out = (weights[None, :] * np.cos(2 * math.pi * (x @ w.T))).sum(axis=1)
    return out, "dual", float(math.exp(-2 * math.pi**2 * gamma**2 * dual_r**2) * max(len(w), 1))


def flatness_estimate(lattice: Lattice, gamma: float, n_probe: int, rng: np.random.Generator,
                      cap: int = ENUMERATION_CAP) -> FlatnessEstimate:
    """Lower-bound estimate of ``max_x |V * rho_{gamma, Lambda}(x) - 1|`` over the cell.

    Probes the origin, ``n_probe`` cell-uniform points and the probe farthest
    from the origin (a deep-hole proxy); returns the largest deviation seen.
    """
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    n = lattice.dimension
    probes = sample_cell_uniform(lattice, rng, size=max(int(n_probe), 1))
    deep = probes[np.argmax(np.sum(probes**2, axis=1))]
    probes = np.vstack([np.zeros(n), probes, deep])
    if lattice.family is Family.INTEGER:
        flat = probes.reshape(-1)
        dev = _periodized_1d(flat, gamma, lattice.scale).reshape(probes.shape)
        with np.errstate(divide="ignore"):
            vals = np.expm1(np.sum(np.log1p(dev), axis=1))
        method, bound = "product", 0.0
    else:
        vals, method, bound = periodized_gaussian(lattice, probes, gamma, cap)
    i = int(np.argmax(np.abs(vals)))
    return FlatnessEstimate(float(abs(vals[i])), float(gamma), probes[i], len(probes), method, bound)
