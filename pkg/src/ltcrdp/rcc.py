"""Reverse channel coding with the Poisson functional representation.

The target channel is the jointly Gaussian RDP-optimal channel of a scalar
Gaussian source.  Encoder and decoder share a stream of candidates
``X_i ~ Q`` (the reconstruction marginal) and exponential arrivals; the encoder
sends the index minimizing ``W_i * q(X_i) / p(X_i | x)``, and the index is
Zipf-coded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import PerceptionMetric, RDPoint
from .errors import ConfigError
from .metrics import GaussianSpec, gaussian_rdp, gaussian_rdp_channel, gaussian_w2sq_per_dim, mse_per_dim

ZIPF_SUPPORT = 10**6


@dataclass(frozen=True, eq=False)
class RCCConfig:
    source: GaussianSpec
    target_D: float
    target_P: float
    codebook_size: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if int(self.codebook_size) < 1:
            raise ConfigError("codebook_size must be >= 1")
        cov = self.source.diag_cov
        if not np.allclose(cov, cov[0]) or not np.allclose(self.source.mean, 0.0):
            raise ConfigError("RCC supports zero-mean i.i.d. Gaussian sources")
        gaussian_rdp(self.sigma2, self.target_D, self.target_P)

    @property
    def sigma2(self) -> float:
        return float(self.source.diag_cov[0])

    @property
    def channel(self) -> "GaussianChannel":
        v, theta = gaussian_rdp_channel(self.sigma2, self.target_D, self.target_P)
        return GaussianChannel(self.sigma2, v, theta)

    @property
    def mutual_information_bits(self) -> float:
        return gaussian_rdp(self.sigma2, self.target_D, self.target_P)


@dataclass(frozen=True)
class GaussianChannel:
    """Per-dimension jointly Gaussian ``(X, X_hat)`` with zero means."""

    sigma2: float
    marginal_var: float
    cross_cov: float

    @property
    def gain(self) -> float:
        return self.cross_cov / self.sigma2

    @property
    def conditional_var(self) -> float:
        return max(self.marginal_var - self.cross_cov**2 / self.sigma2, 0.0)

    def log_ratio(self, candidates: np.ndarray, x: np.ndarray) -> np.ndarray:
        """``log q(c) - log p(c | x)`` summed over the last axis (constants dropped when degenerate)."""
        v, cv = self.marginal_var, self.conditional_var
        if v <= 0 or cv <= 0 or self.cross_cov == 0:
            return np.zeros(candidates.shape[:-1])
        lq = -0.5 * candidates**2 / v - 0.5 * math.log(v)
        lp = -0.5 * (candidates - self.gain * x) ** 2 / cv - 0.5 * math.log(cv)
        return np.sum(lq - lp, axis=-1)


def _draw_codebook(channel: GaussianChannel, N: int, dim: int, rng, trials: int = 1):
    arrivals = np.cumsum(rng.standard_exponential((trials, N)), axis=1)
    cands = math.sqrt(max(channel.marginal_var, 0.0)) * rng.standard_normal((trials, N, dim))
    return arrivals, cands


def _select(channel: GaussianChannel, arrivals, cands, x) -> np.ndarray:
    score = np.log(arrivals) + channel.log_ratio(cands, x[:, None, :])
    return np.argmin(score, axis=1)


def pfr_encode(config: RCCConfig, x, shared_rng: np.random.Generator):
    """Index ``K`` (1-based) of the selected candidate and the candidate itself.

    ``x`` may be a scalar or a block; a block is coded jointly with the
    product channel.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ch = config.channel
    arrivals, cands = _draw_codebook(ch, int(config.codebook_size), len(x), shared_rng)
    k = int(_select(ch, arrivals, cands, x[None, :])[0])
    return k + 1, cands[0, k]


def zipf_lambda(I_bits: float) -> float:
    return 1.0 + 1.0 / (I_bits + math.log2(math.e) / math.e + 1.0)


def zipf_log2_pmf(indices, I_bits: float, support: int = ZIPF_SUPPORT) -> np.ndarray:
    lam = zipf_lambda(I_bits)
    k = np.arange(1, support + 1, dtype=float)
    log2_norm = math.log2(np.sum(k**-lam))
    idx = np.asarray(indices, dtype=float)
    if np.any(idx < 1) or np.any(idx > support):
        raise ConfigError(f"indices must lie in 1..{support}")
    return -lam * np.log2(idx) - log2_norm


def zipf_rate(indices, I_bits: float, support: int = ZIPF_SUPPORT) -> tuple[float, float]:
    """Mean Zipf code length ``E[-log2 q(K)]`` in bits per coded symbol, with SE."""
    if I_bits < 0:
        raise ConfigError("I_bits must be non-negative")
    bits = -zipf_log2_pmf(indices, I_bits, support)
    se = float(bits.std(ddof=1) / math.sqrt(len(bits))) if bits.size > 1 else 0.0
    return float(bits.mean()), se


def rate_bound_bits(I_bits: float) -> float:
    """``I + log2(I + 1) + 4`` evaluated in bits."""
    return I_bits + math.log2(I_bits + 1.0) + 4.0


def pfr_trials(config: RCCConfig, n_trials: int, rng: np.random.Generator, block_dim: int = 1,
               x: np.ndarray | None = None, chunk_elems: int = 2_000_000):
    """Run ``n_trials`` independent encodings; returns ``(x, x_hat, K)``.

    ``x`` fixes the source samples (one row per trial) when given.
    """
    ch = config.channel
    N = int(config.codebook_size)
    if x is None:
        x = math.sqrt(config.sigma2) * rng.standard_normal((n_trials, block_dim))
    x = np.asarray(x, dtype=float).reshape(n_trials, block_dim)
    per = max(1, chunk_elems // (N * block_dim))
    ks, xh = [], []
    for start in range(0, n_trials, per):
        xb = x[start:start + per]
        arrivals, cands = _draw_codebook(ch, N, block_dim, rng, len(xb))
        k = _select(ch, arrivals, cands, xb)
        ks.append(k + 1)
        xh.append(cands[np.arange(len(xb)), k])
    return x, np.concatenate(xh), np.concatenate(ks)


def rcc_evaluate(config: RCCConfig, n_trials: int, rng: np.random.Generator | None = None,
                 block_dim: int = 1) -> RDPoint:
    """Operational (rate, distortion, perception) of PFR coding at the RDP-optimal channel."""
    if n_trials < 10_000:
        raise ConfigError("rcc_evaluate needs n_trials >= 10^4")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    x, x_hat, k = pfr_trials(config, n_trials, rng, block_dim)
    mse, mse_se = mse_per_dim(x, x_hat)
    I_block = block_dim * config.mutual_information_bits
    rate, rate_se = zipf_rate(k, I_block)
    spec = GaussianSpec.iid(block_dim, config.sigma2)
    fitted = GaussianSpec(x_hat.mean(axis=0), np.maximum(x_hat.var(axis=0), 1e-300))
    perc = gaussian_w2sq_per_dim(spec, fitted)
    blocks = np.array_split(np.arange(n_trials), 10)
    bv = [gaussian_w2sq_per_dim(spec, GaussianSpec(x_hat[b].mean(axis=0),
                                                   np.maximum(x_hat[b].var(axis=0), 1e-300))) for b in blocks]
    return RDPoint(
        rate_bits_per_dim=rate / block_dim,
        rate_se=rate_se / block_dim,
        distortion_mse_per_dim=mse,
        mse_se=mse_se,
        perception_per_dim=perc,
        perception_se=float(np.std(bv, ddof=1) / math.sqrt(len(bv))),
        perception_metric=PerceptionMetric.EXACT_GAUSSIAN,
        n_rate=n_trials,
        n_dist=n_trials,
        n_perc=n_trials,
        seed=config.seed,
        diagnostics={
            "codebook_size": int(config.codebook_size),
            "zipf_support": ZIPF_SUPPORT,
            "block_dim": block_dim,
            "I_bits_per_dim": config.mutual_information_bits,
            "xhat_var": float(x_hat.var()),
            "max_index": int(k.max()),
        },
    )
