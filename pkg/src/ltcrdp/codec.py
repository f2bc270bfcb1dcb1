"""Lattice transform codecs: deterministic, private-dither (PD), shared-dither (SD)
and quantized-shared-dither (QSD) pipelines with their operational rates.

Rates are evaluated against the analytic latent density of an affine analysis
transform applied to a Gaussian source.  The probability of a codeword ``c``
given dither ``d`` is the density mass of the cell ``c + d + V0``, which equals
``V * E_{u'}[p_y(c + d + u')]`` for ``u'`` uniform on the Voronoi cell; the rate
is the expected ``-log2`` of that probability per dimension.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import log_ndtr

from .dither import (
    NestedPair,
    mod_lattice,
    nested_pair,
    sample_cell_uniform,
    sample_coset_uniform,
)
from .errors import ConfigError, ContractError, InputError, ProtocolError
from .lattice import Family, Lattice, LatticePoint, build_lattice, nearest_point, second_moment_mc, volume
from .metrics import GaussianSpec, gaussian_w2sq_per_dim, mse_per_dim, sliced_w2sq

LOG2E = 1.0 / math.log(2.0)
DEFAULT_FLOOR = 1e-300


# --------------------------------------------------------------------------- #
# transforms and densities


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """``y = A x + b`` applied to row vectors."""

    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        b = np.atleast_1d(np.asarray(self.offset, dtype=float))
        if b.shape != (A.shape[0],):
            raise ConfigError(f"offset length {b.shape} does not match matrix rows {A.shape[0]}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ConfigError("affine transform entries must be finite")
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "offset", b)

    @classmethod
    def identity(cls, n: int) -> "AffineTransform":
        return cls(np.eye(n), np.zeros(n))

    @classmethod
    def scalar(cls, n: int, a: float, b: float = 0.0) -> "AffineTransform":
        return cls(a * np.eye(n), np.full(n, float(b)))

    @property
    def in_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def out_dim(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.matrix.T + self.offset


@dataclass(frozen=True, eq=False)
class LatentDensity:
    """Analytic Gaussian density of the latent ``y`` (diagonal covariance)."""

    mean: np.ndarray
    covariance: np.ndarray
    kind: str = "AnalyticGaussian"

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        c = np.atleast_1d(np.asarray(self.covariance, dtype=float))
        if m.shape != c.shape:
            raise ConfigError("latent mean and covariance lengths differ")
        if np.any(c <= 0):
            raise ConfigError("latent covariance entries must be positive")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", c)

    @classmethod
    def from_source(cls, source: GaussianSpec, analysis: AffineTransform) -> "LatentDensity":
        """Push a diagonal Gaussian source through ``analysis``.

        The pushed covariance must stay diagonal, which holds for scaled
        identities and coordinate permutations.
        """
        A = analysis.matrix
        if A.shape[1] != source.dimension:
            raise ConfigError("analysis transform does not match the source dimension")
        cov = (A * source.diag_cov) @ A.T
        off = cov - np.diag(np.diag(cov))
        if np.any(np.abs(off) > 1e-12 * max(1.0, float(np.abs(cov).max()))):
            raise ContractError("latent covariance is not diagonal")
        return cls(analysis(source.mean), np.diag(cov).copy())

    def logpdf(self, y: np.ndarray) -> np.ndarray:
        z = (y - self.mean) ** 2 / self.covariance
        const = -0.5 * float(np.sum(np.log(2 * np.pi * self.covariance)))
        return const - 0.5 * np.sum(z, axis=-1)

    def matches(self, other: "LatentDensity", tol: float = 1e-9) -> bool:
        return (
            self.mean.shape == other.mean.shape
            and np.allclose(self.mean, other.mean, atol=tol)
            and np.allclose(self.covariance, other.covariance, rtol=tol, atol=tol)
        )


# --------------------------------------------------------------------------- #
# configuration


class Mode(str, enum.Enum):
    DETERMINISTIC = "Deterministic"
    PD = "PD"
    SD = "SD"
    QSD = "QSD"

    @classmethod
    def parse(cls, name: "str | Mode") -> "Mode":
        if isinstance(name, Mode):
            return name
        for m in cls:
            if m.value.lower() == str(name).strip().lower():
                return m
        raise ConfigError(f"unknown codec mode {name!r}")


@dataclass(frozen=True, eq=False)
class CodecConfig:
    mode: Mode
    lattice: Lattice
    analysis: AffineTransform
    synthesis: AffineTransform
    latent_density: LatentDensity
    s: float = 1.0
    gamma: int = 1

    def __post_init__(self):
        mode = Mode.parse(self.mode)
        object.__setattr__(self, "mode", mode)
        n_l = self.lattice.dimension
        if self.analysis.out_dim != n_l or self.synthesis.in_dim != n_l:
            raise ConfigError("transform dimensions do not match the lattice dimension")
        if self.latent_density.mean.shape != (n_l,):
            raise ConfigError("latent density dimension does not match the lattice")
        if mode in (Mode.PD, Mode.QSD):
            if not (math.isfinite(self.s) and self.s >= 1.0):
                raise ConfigError(f"dither multiplier s must be >= 1, got {self.s}")
        elif self.s != 1.0:
            raise ConfigError(f"s is only meaningful for PD and QSD (got s={self.s} for {mode.value})")
        if mode is Mode.QSD:
            if int(self.gamma) != self.gamma or self.gamma < 1:
                raise ConfigError(f"gamma must be an integer >= 1, got {self.gamma}")
            object.__setattr__(self, "gamma", int(self.gamma))
        elif self.gamma != 1:
            raise ConfigError(f"gamma is only meaningful for QSD (got {self.gamma} for {mode.value})")

    @classmethod
    def build(
        cls,
        mode: "str | Mode",
        lattice: Lattice,
        source: GaussianSpec,
        analysis: AffineTransform | None = None,
        synthesis: AffineTransform | None = None,
        s: float = 1.0,
        gamma: int = 1,
    ) -> "CodecConfig":
        """Convenience constructor: identity transforms by default, density pushed from ``source``."""
        n = lattice.dimension
        analysis = analysis or AffineTransform.identity(n)
        synthesis = synthesis or AffineTransform.identity(n)
        return cls(Mode.parse(mode), lattice, analysis, synthesis,
                   LatentDensity.from_source(source, analysis), s, gamma)

    @cached_property
    def nested(self) -> NestedPair:
        if self.mode is not Mode.QSD:
            raise ContractError("only QSD codecs carry a nested pair")
        return nested_pair(self.lattice, self.gamma)

    @property
    def shared_randomness_bits(self) -> float:
        """log2(Gamma) for QSD, infinite for SD, zero otherwise."""
        if self.mode is Mode.SD:
            return math.inf
        if self.mode is Mode.QSD:
            return math.log2(self.gamma)
        return 0.0


@dataclass(frozen=True)
class DitherRecord:
    """Shared randomness produced by the encoder.

    ``vector`` is the dither actually subtracted (zeros when there is none);
    ``index`` is the coset index for QSD.
    """

    kind: str
    vector: np.ndarray | None = None
    index: np.ndarray | None = None

    @property
    def empty(self) -> bool:
        return self.kind == "none"


_NO_DITHER = DitherRecord("none")


# --------------------------------------------------------------------------- #
# encode / decode


def _draw_encoder_dither(config: CodecConfig, m: int, rng):
    if config.mode is Mode.SD:
        u = sample_cell_uniform(config.lattice, rng, size=m)
        return u, DitherRecord("shared", u)
    if config.mode is Mode.QSD:
        idx, vec = sample_coset_uniform(config.nested, rng, size=m)
        return vec, DitherRecord("coset", vec, idx)
    return None, _NO_DITHER


def encode(config: CodecConfig, x, rng: np.random.Generator):
    """Encode ``x`` (one vector or a batch) and return ``(codeword, dither_record)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] != config.analysis.in_dim or not np.all(np.isfinite(xb)):
        raise InputError("x must be finite with the source dimension")
    y = config.analysis(xb)
    d, record = _draw_encoder_dither(config, len(xb), rng)
    cw = nearest_point(config.lattice, y if d is None else y - d)
    if single:
        cw = LatticePoint(cw.coords[0], cw.embedding[0])
        if not record.empty:
            record = DitherRecord(record.kind, record.vector[0],
                                  None if record.index is None else record.index[0])
    return cw, record


def decode(config: CodecConfig, codeword: LatticePoint, dither_record: DitherRecord | None,
           rng: np.random.Generator) -> np.ndarray:
    """Reconstruct from a codeword; PD and QSD draw fresh private dither from ``rng``."""
    c = np.asarray(codeword.embedding, dtype=float)
    single = c.ndim == 1
    c = np.atleast_2d(c)
    mode = config.mode
    if mode in (Mode.SD, Mode.QSD):
        if dither_record is None or dither_record.empty:
            raise ProtocolError(f"{mode.value} decoding requires the shared dither record")
        shared = np.atleast_2d(dither_record.vector)
    elif dither_record is not None and not dither_record.empty:
        raise ProtocolError(f"{mode.value} decoding takes no shared dither")
    if mode is Mode.DETERMINISTIC:
        z = c
    elif mode is Mode.PD:
        z = c + config.s * sample_cell_uniform(config.lattice, rng, size=len(c))
    elif mode is Mode.SD:
        z = c + shared
    else:
        z = c + shared + config.s * sample_cell_uniform(config.nested.fine, rng, size=len(c))
    out = config.synthesis(z)
    return out[0] if single else out


def roundtrip(config: CodecConfig, x, rng: np.random.Generator) -> np.ndarray:
    cw, rec = encode(config, x, rng)
    return decode(config, cw, rec, rng)


# --------------------------------------------------------------------------- #
# rate estimation


@dataclass
class RateEstimate:
    """Bits per dimension with standard error; unpacks as ``(value, se)``."""

    value: float
    se: float
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.value
        yield self.se


def _inner_dither(lattice: Lattice, m: int, n_inner: int, rng, sampler: str) -> np.ndarray:
    """``(m, n_inner, n)`` cell-uniform samples.

    ``"lhs"`` stratifies each basis coordinate of the fundamental parallelepiped
    (a randomized Latin hypercube) before reducing mod the lattice.  Each sample
    stays exactly cell-uniform; the strata cut the variance of the inner average.
    """
    n = lattice.dimension
    if sampler == "iid":
        w = rng.random((m, n_inner, n))
    elif sampler == "lhs":
        perm = np.argsort(rng.random((m, n, n_inner)), axis=2).transpose(0, 2, 1)
        w = (perm + rng.random((m, n_inner, n))) / n_inner
    else:
        raise ConfigError(f"unknown inner sampler {sampler!r}")
    flat = (w @ lattice.generator).reshape(-1, n)
    return mod_lattice(lattice, flat).reshape(m, n_inner, n)


def _log_interval_mass(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """``log(Phi(hi) - Phi(lo))`` computed on the tail nearer to the interval."""
    flip = lo > 0
    a = np.where(flip, -hi, lo)
    b = np.where(flip, -lo, hi)
    la, lb = log_ndtr(a), log_ndtr(b)
    with np.errstate(divide="ignore"):
        return lb + np.log1p(-np.exp(la - lb))


def _box_log_cell_mass(config: CodecConfig, centres: np.ndarray) -> np.ndarray:
    # Zn cells are axis-aligned cubes, so the Gaussian cell mass factorizes exactly.
    d = config.latent_density
    sd = np.sqrt(d.covariance)
    h = 0.5 * config.lattice.scale
    lo = (centres - h - d.mean) / sd
    hi = (centres + h - d.mean) / sd
    return np.sum(_log_interval_mass(lo, hi), axis=1)


def _log_cell_mass(config: CodecConfig, centres: np.ndarray, n_inner: int, rng, sampler: str) -> np.ndarray:
    """Natural log of ``V * mean_{u'} p_y(centre + u')`` for each centre.

    On ``Zn`` with ``sampler="lhs"`` the cell mass is computed in closed form
    and no inner samples are drawn.
    """
    if sampler == "lhs" and config.lattice.family is Family.INTEGER:
        return _box_log_cell_mass(config, centres)
    u = _inner_dither(config.lattice, len(centres), n_inner, rng, sampler)
    lp = config.latent_density.logpdf(centres[:, None, :] + u)
    top = lp.max(axis=1)
    lme = top + np.log(np.mean(np.exp(lp - top[:, None]), axis=1))
    return lme + math.log(volume(config.lattice))


def _check_source(config: CodecConfig, source: GaussianSpec) -> None:
    if source.dimension != config.analysis.in_dim:
        raise ContractError("source dimension does not match the codec")
    if not config.latent_density.matches(LatentDensity.from_source(source, config.analysis)):
        raise ContractError("latent density is inconsistent with (source, analysis transform)")


def _chunk_rows(n_inner: int, n: int) -> int:
    return max(1, min(20_000, 4_000_000 // max(1, n_inner * n)))


def _cell_rate(config, source, n_outer, n_inner, rng, centre_fn, floor, sampler) -> RateEstimate:
    n = config.lattice.dimension
    log_floor = math.log(floor)
    vals = []
    clamps = 0
    done = 0
    step = _chunk_rows(n_inner, n)
    while done < n_outer:
        m = min(step, n_outer - done)
        x = source.sample(rng, m)
        centres = centre_fn(config.analysis(x))
        lm = _log_cell_mass(config, centres, n_inner, rng, sampler)
        low = lm < log_floor
        clamps += int(low.sum())
        lm = np.where(low, log_floor, lm)
        vals.append(-lm * LOG2E / n)
        done += m
    v = np.concatenate(vals)
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    diag = {"clamp_events": clamps, "n_outer": int(n_outer), "n_inner": int(n_inner),
            "sampler": "exact-box" if sampler == "lhs" and config.lattice.family is Family.INTEGER else sampler}
    return RateEstimate(float(v.mean()), se, diag)


def _check_budget(n_outer: int, n_inner: int) -> None:
    if n_outer < 1000:
        raise ConfigError("rate estimation needs n_outer >= 1000")
    if n_inner < 64:
        raise ConfigError("rate estimation needs n_inner >= 64")


def rate_conditional_mc(config: CodecConfig, source: GaussianSpec, n_outer: int, n_inner: int = 256,
                        rng: np.random.Generator | None = None, floor: float = DEFAULT_FLOOR,
                        sampler: str = "lhs") -> RateEstimate:
    """Shared-dither rate ``H(c | dither) / n`` from the quantized cell mass.

    For QSD the coset dither takes the place of the continuous dither; the inner
    average still runs over the continuous Voronoi cell of the coarse lattice.
    """
    if config.mode not in (Mode.SD, Mode.QSD):
        raise ContractError("rate_conditional_mc applies to SD and QSD codecs")
    _check_budget(n_outer, n_inner)
    _check_source(config, source)
    rng = rng if rng is not None else np.random.default_rng()

    def centres(y):
        d, _ = _draw_encoder_dither(config, len(y), rng)
        return config.lattice.quantize(y - d) + d

    return _cell_rate(config, source, n_outer, n_inner, rng, centres, floor, sampler)


def rate_noisy_proxy_mc(config: CodecConfig, source: GaussianSpec, n_outer: int, n_inner: int = 256,
                        rng: np.random.Generator | None = None, floor: float = DEFAULT_FLOOR,
                        sampler: str = "lhs") -> RateEstimate:
    """SD rate through the additive-noise equivalence: ``p_y`` averaged around ``y + u``."""
    if config.mode is not Mode.SD:
        raise ContractError("the additive-noise rate proxy is only valid for SD codecs")
    _check_budget(n_outer, n_inner)
    _check_source(config, source)
    rng = rng if rng is not None else np.random.default_rng()

    def centres(y):
        return y + sample_cell_uniform(config.lattice, rng, size=len(y))

    return _cell_rate(config, source, n_outer, n_inner, rng, centres, floor, sampler)


def rate_model_mc(config: CodecConfig, source: GaussianSpec, n_outer: int, n_inner: int = 256,
                  rng: np.random.Generator | None = None, floor: float = DEFAULT_FLOOR,
                  sampler: str = "lhs") -> RateEstimate:
    """Deterministic/PD rate ``E[-log2 P(Q(y))] / n`` under the analytic latent model.

    QSD codecs are routed through the same code path, so with a single coset
    the result is bit-identical to PD.
    """
    if config.mode is Mode.SD:
        raise ContractError("use rate_conditional_mc for SD codecs")
    if config.mode is Mode.QSD:
        return rate_conditional_mc(config, source, n_outer, n_inner, rng, floor, sampler)
    _check_budget(n_outer, n_inner)
    _check_source(config, source)
    rng = rng if rng is not None else np.random.default_rng()
    return _cell_rate(config, source, n_outer, n_inner, rng, config.lattice.quantize, floor, sampler)


def rate_plugin_entropy(config: CodecConfig, source: GaussianSpec, n_samples: int,
                        rng: np.random.Generator | None = None, blocks: int = 10) -> RateEstimate:
    """Plug-in entropy of empirical codeword frequencies, per dimension, with jackknife SE."""
    if config.mode not in (Mode.DETERMINISTIC, Mode.PD):
        raise ContractError("rate_plugin_entropy applies to Deterministic and PD codecs")
    if n_samples < 10_000:
        raise ConfigError("rate_plugin_entropy needs n_samples >= 10^4")
    _check_source(config, source)
    rng = rng if rng is not None else np.random.default_rng()
    n = config.lattice.dimension
    x = source.sample(rng, n_samples)
    coords = config.lattice.coordinates(config.lattice.quantize(config.analysis(x)))
    _, labels = np.unique(coords, axis=0, return_inverse=True)
    labels = labels.ravel()
    k = int(labels.max()) + 1

    def entropy(counts):
        p = counts[counts > 0] / counts.sum()
        return float(-(p * np.log2(p)).sum()) / n

    total = np.bincount(labels, minlength=k)
    value = entropy(total)
    block_id = np.arange(n_samples) * blocks // n_samples
    loo = []
    for b in range(blocks):
        loo.append(entropy(total - np.bincount(labels[block_id == b], minlength=k)))
    loo = np.asarray(loo)
    se = float(math.sqrt((blocks - 1) / blocks * np.sum((loo - loo.mean()) ** 2)))
    diag = {"distinct_codewords": k, "n_samples": int(n_samples)}
    if k > n_samples / 20:
        diag["warning"] = "many distinct codewords; plug-in entropy is biased low"
    return RateEstimate(value, se, diag)


def inner_bias_shift(config: CodecConfig, source: GaussianSpec, n_outer: int, n_inner: int, seed: int,
                     sampler: str = "lhs") -> float:
    """Change in the rate estimate when ``n_inner`` is doubled (same outer samples)."""
    from .seeding import substream

    est = rate_model_mc if config.mode in (Mode.DETERMINISTIC, Mode.PD, Mode.QSD) else rate_conditional_mc
    a = est(config, source, n_outer, n_inner, substream(seed, "codec.bias"), sampler=sampler)
    b = est(config, source, n_outer, 2 * n_inner, substream(seed, "codec.bias"), sampler=sampler)
    return b.value - a.value


# --------------------------------------------------------------------------- #
# evaluation


class PerceptionMetric(str, enum.Enum):
    SLICED = "SlicedW2Sq"
    EXACT_GAUSSIAN = "ExactGaussianW2Sq"

    @classmethod
    def parse(cls, name: "str | PerceptionMetric") -> "PerceptionMetric":
        if isinstance(name, PerceptionMetric):
            return name
        key = str(name).strip().lower()
        for m in cls:
            if m.value.lower() == key:
                return m
        if key in ("sliced", "sliced_w2"):
            return cls.SLICED
        if key in ("exact", "gaussian", "exact_gaussian"):
            return cls.EXACT_GAUSSIAN
        raise ConfigError(f"unknown perception metric {name!r}")


@dataclass(frozen=True)
class EvalBudget:
    n_rate_outer: int = 20_000
    n_rate_inner: int = 256
    n_dist: int = 100_000
    n_perc: int = 10_000
    n_projections: int = 50
    rate_estimator: str = "model"  # "model" or "plugin" for Deterministic/PD

    def __post_init__(self):
        _check_budget(self.n_rate_outer, self.n_rate_inner)
        if self.n_dist < 2 or self.n_perc < 2:
            raise ConfigError("distortion and perception budgets must be >= 2")
        if self.n_projections < 1:
            raise ConfigError("n_projections must be >= 1")
        if self.rate_estimator not in ("model", "plugin"):
            raise ConfigError(f"unknown rate estimator {self.rate_estimator!r}")


@dataclass
class RDPoint:
    rate_bits_per_dim: float
    rate_se: float
    distortion_mse_per_dim: float
    mse_se: float
    perception_per_dim: float
    perception_se: float
    perception_metric: PerceptionMetric
    n_rate: int
    n_dist: int
    n_perc: int
    seed: int | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("rate_se", "mse_se", "perception_se", "distortion_mse_per_dim", "perception_per_dim"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be non-negative")


def _child_rngs(rng_or_seed, count: int):
    from .seeding import substream

    if isinstance(rng_or_seed, np.random.Generator):
        seeds = rng_or_seed.integers(0, 2**63 - 1, size=count)
        return [np.random.default_rng(int(s)) for s in seeds], None
    seed = int(rng_or_seed)
    return [substream(seed, "codec.evaluate", i) for i in range(count)], seed


def _block_se(fn, data_a, data_b, blocks: int = 10) -> float:
    idx = np.array_split(np.arange(len(data_a)), blocks)
    vals = np.array([fn(data_a[i], data_b[i]) for i in idx])
    return float(vals.std(ddof=1) / math.sqrt(blocks))


def perception(source: GaussianSpec, x_ref: np.ndarray, x_hat: np.ndarray, metric: PerceptionMetric,
               n_projections: int, rng) -> tuple[float, float]:
    """Per-dimension perception between reference samples and reconstructions."""
    if metric is PerceptionMetric.SLICED:
        return sliced_w2sq(x_ref, x_hat, n_projections, rng)

    def fit(_, b):
        var = np.maximum(b.var(axis=0), 1e-300)
        return gaussian_w2sq_per_dim(source, GaussianSpec(b.mean(axis=0), var))

    return fit(None, x_hat), _block_se(fit, x_hat, x_hat)


def evaluate(config: CodecConfig, source: GaussianSpec, eval_budget: EvalBudget | None = None,
             perception_metric: "str | PerceptionMetric" = PerceptionMetric.SLICED,
             rng: "np.random.Generator | int" = 0) -> RDPoint:
    """Rate, distortion and perception of ``config`` on ``source``.

    Each of the three estimates uses its own random stream, so they are
    reproducible independently of each other and of evaluation order.
    """
    budget = eval_budget or EvalBudget()
    metric = PerceptionMetric.parse(perception_metric)
    _check_source(config, source)
    (r_rate, r_dist, r_perc), seed = _child_rngs(rng, 3)

    if config.mode is Mode.SD:
        rate = rate_conditional_mc(config, source, budget.n_rate_outer, budget.n_rate_inner, r_rate)
        n_rate = budget.n_rate_outer
    elif budget.rate_estimator == "plugin" and config.mode in (Mode.DETERMINISTIC, Mode.PD):
        rate = rate_plugin_entropy(config, source, max(budget.n_rate_outer, 10_000), r_rate)
        n_rate = max(budget.n_rate_outer, 10_000)
    else:
        rate = rate_model_mc(config, source, budget.n_rate_outer, budget.n_rate_inner, r_rate)
        n_rate = budget.n_rate_outer

    x = source.sample(r_dist, budget.n_dist)
    mse, mse_se = mse_per_dim(x, roundtrip(config, x, r_dist))

    x_ref = source.sample(r_perc, budget.n_perc)
    x_in = source.sample(r_perc, budget.n_perc)
    x_hat = roundtrip(config, x_in, r_perc)
    p, p_se = perception(source, x_ref, x_hat, metric, budget.n_projections, r_perc)

    return RDPoint(
        rate_bits_per_dim=max(rate.value, 0.0),
        rate_se=rate.se,
        distortion_mse_per_dim=mse,
        mse_se=mse_se,
        perception_per_dim=max(p, 0.0),
        perception_se=p_se,
        perception_metric=metric,
        n_rate=n_rate,
        n_dist=budget.n_dist,
        n_perc=budget.n_perc,
        seed=seed,
        diagnostics={"rate": rate.diagnostics, "raw_rate": rate.value},
    )


# --------------------------------------------------------------------------- #
# identities and calibration


@dataclass(frozen=True)
class IdentityReport:
    pd_error: float
    sd_error: float
    deterministic_error: float
    s: float
    residual: float
    residual_se: float

    @property
    def z_score(self) -> float:
        return self.residual / self.residual_se if self.residual_se > 0 else (0.0 if self.residual == 0 else math.inf)


def verify_pd_sd_identity(lattice: Lattice, s: float, n_samples: int, rng: np.random.Generator,
                          inputs: np.ndarray | None = None) -> IdentityReport:
    """Check ``E||x - x_PD||^2 = s^2 E||x - x_SD||^2 + E||x - Q(x)||^2`` per dimension.

    Uses a standard normal source (or the supplied ``inputs``) and identity
    transforms; all three terms share the same ``x`` samples.
    """
    if s < 1:
        raise ConfigError("s must be >= 1")
    n = lattice.dimension
    x = rng.standard_normal((n_samples, n)) if inputs is None else np.asarray(inputs, dtype=float)
    q = lattice.quantize(x)
    e_det = np.sum((x - q) ** 2, axis=1) / n
    x_pd = q + s * sample_cell_uniform(lattice, rng, size=len(x))
    e_pd = np.sum((x - x_pd) ** 2, axis=1) / n
    u = sample_cell_uniform(lattice, rng, size=len(x))
    x_sd = lattice.quantize(x - u) + u
    e_sd = np.sum((x - x_sd) ** 2, axis=1) / n
    r = e_pd - s**2 * e_sd - e_det
    return IdentityReport(
        float(e_pd.mean()), float(e_sd.mean()), float(e_det.mean()), float(s),
        float(r.mean()), float(r.std(ddof=1) / math.sqrt(len(r))),
    )


_UNIT_SECOND_MOMENT: dict = {}


def unit_second_moment(family, n: int, num_samples: int = 400_000, seed: int = 12345) -> float:
    """Second moment of the unit-scale lattice (exact for Z^n, cached MC otherwise)."""
    lat = build_lattice(family, n)
    if lat.family.value == "IntegerZ":
        return 1.0 / 12.0
    key = (lat.family, n)
    if key not in _UNIT_SECOND_MOMENT:
        from .seeding import substream

        m, _ = second_moment_mc(lat, num_samples, substream(seed, "codec.calibrate"))
        _UNIT_SECOND_MOMENT[key] = m
    return _UNIT_SECOND_MOMENT[key]


def lattice_with_second_moment(family, n: int, target: float) -> Lattice:
    """Scale a lattice so its per-dimension second moment equals ``target``."""
    if not target > 0:
        raise ConfigError("target second moment must be positive")
    return build_lattice(family, n, math.sqrt(target / unit_second_moment(family, n)))
