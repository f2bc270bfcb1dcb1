"""Distortion and perception metrics, plus the Gaussian RDP function.

All rates are in bits.  Perception is reported per dimension: for the sliced
estimator this is the average over unit directions of the 1-D squared
Wasserstein distance, which for isotropic problems equals (1/n) W_2^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError, InputError


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Gaussian with diagonal covariance."""

    mean: np.ndarray
    diag_cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_1d(np.asarray(self.diag_cov, dtype=float))
        if mean.shape != cov.shape or mean.ndim != 1:
            raise InputError("mean and diag_cov must be vectors of equal length")
        if np.any(cov <= 0) or not np.all(np.isfinite(cov)):
            raise InputError("diag_cov entries must be positive and finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "diag_cov", cov)

    @classmethod
    def iid(cls, n: int, sigma2: float = 1.0, mean: float = 0.0) -> "GaussianSpec":
        return cls(np.full(n, float(mean)), np.full(n, float(sigma2)))

    @property
    def dimension(self) -> int:
        return len(self.mean)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.diag_cov)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.mean + self.std * rng.standard_normal((int(size), self.dimension))

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        """Natural-log density of each row of ``x``."""
        z = (x - self.mean) / self.std
        const = -0.5 * np.sum(np.log(2 * np.pi * self.diag_cov))
        return const - 0.5 * np.sum(z * z, axis=-1)


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def mse_per_dim(x, x_hat) -> tuple[float, float]:
    """Mean of ||x - x_hat||^2 / n over the batch, with standard error."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x_hat = np.atleast_2d(np.asarray(x_hat, dtype=float))
    if x.shape != x_hat.shape:
        raise InputError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    return _mean_se(np.mean((x - x_hat) ** 2, axis=1))


def gaussian_w2sq_per_dim(a: GaussianSpec, b: GaussianSpec) -> float:
    """Closed-form (1/n) W_2^2 between diagonal Gaussians."""
    if a.dimension != b.dimension:
        raise InputError("dimension mismatch")
    return float(np.mean((a.mean - b.mean) ** 2 + (a.std - b.std) ** 2))


def random_directions(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` unit vectors uniform on the sphere in R^n (rows)."""
    g = rng.standard_normal((int(count), n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sliced_w2sq(samples_a, samples_b, n_projections: int, rng: np.random.Generator) -> tuple[float, float]:
    """Sliced squared 2-Wasserstein distance between two equal-size sample sets.

    Each projection couples the sorted projected samples (the exact optimal
    coupling between 1-D empirical measures of equal size).  Returns the mean
    over projections and its standard error across projections.
    """
    a = np.atleast_2d(np.asarray(samples_a, dtype=float))
    b = np.atleast_2d(np.asarray(samples_b, dtype=float))
    if a.shape != b.shape:
        raise ContractError(
            f"sliced_w2sq needs equal sample counts and dimensions, got {a.shape} and {b.shape}"
        )
    if n_projections < 1:
        raise ContractError("n_projections must be >= 1")
    theta = random_directions(a.shape[1], n_projections, rng)
    pa = np.sort(a @ theta.T, axis=0)
    pb = np.sort(b @ theta.T, axis=0)
    per_projection = np.mean((pa - pb) ** 2, axis=0)
    return _mean_se(per_projection)


def gaussian_rdp_branch(sigma2: float, D: float, P: float) -> int:
    """1 if the perception constraint is active, 2 for the classical branch."""
    _check_rdp_domain(sigma2, D, P)
    sigma = math.sqrt(sigma2)
    if math.isinf(P):
        return 2
    return 1 if math.sqrt(P) < sigma - math.sqrt(abs(sigma2 - D)) else 2


def _check_rdp_domain(sigma2: float, D: float, P: float) -> None:
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    if not (0 < D <= 2 * sigma2):
        raise DomainError(f"D must lie in (0, 2*sigma2] = (0, {2 * sigma2}], got {D}")
    if not P >= 0:
        raise DomainError(f"P must be non-negative, got {P}")


def gaussian_rdp(sigma2: float, D: float, P: float) -> float:
    """R(D, P) in bits for a scalar N(0, sigma2) source, MSE distortion, W_2^2 perception.

    ``P = math.inf`` selects the unconstrained (classical) branch.
    """
    if gaussian_rdp_branch(sigma2, D, P) == 2:
        return max(0.5 * math.log2(sigma2 / D), 0.0)
    a = (math.sqrt(sigma2) - math.sqrt(P)) ** 2
    cov = 0.5 * (sigma2 + a - D)
    return 0.5 * math.log2(sigma2 * a / (sigma2 * a - cov**2))


def gaussian_rdp_channel(sigma2: float, D: float, P: float) -> tuple[float, float]:
    """Optimal jointly Gaussian test channel: ``(var(X_hat), cov(X, X_hat))``."""
    if gaussian_rdp_branch(sigma2, D, P) == 2:
        v = max(sigma2 - D, 0.0)
        return v, v
    a = (math.sqrt(sigma2) - math.sqrt(P)) ** 2
    return a, max(0.5 * (sigma2 + a - D), 0.0)
