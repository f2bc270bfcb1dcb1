"""Gaussian-source experiments: zero-perception codec builders, RD sweeps and
matched-distortion comparisons."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import (
    AffineTransform,
    CodecConfig,
    EvalBudget,
    Mode,
    PerceptionMetric,
    RDPoint,
    evaluate,
    lattice_with_second_moment,
    roundtrip,
)
from .metrics import GaussianSpec, gaussian_rdp
from .seeding import substream
from .theory import pd_params, sd_params


def _iid_sigma2(source: GaussianSpec) -> float:
    return float(np.mean(source.diag_cov))


def sd_codec(family, source: GaussianSpec, D: float, P: float = 0.0) -> CodecConfig:
    """Shared-dither codec from the closed-form (D, P) construction."""
    n = source.dimension
    p = sd_params(_iid_sigma2(source), D, P)
    lat = lattice_with_second_moment(family, n, p.lattice_second_moment)
    return CodecConfig.build(Mode.SD, lat, source, AffineTransform.scalar(n, p.analysis_scale),
                             AffineTransform.scalar(n, p.synthesis_scale))


def _matched_gain(cfg: CodecConfig, source: GaussianSpec, pilot: int, seed: int, tag: str) -> float:
    """Synthesis gain that makes the reconstruction second moment equal the source's."""
    rng = substream(seed, f"experiments.pilot.{tag}")
    z = roundtrip(cfg, source.sample(rng, pilot), rng)
    return math.sqrt(_iid_sigma2(source) / float(np.mean((z - source.mean) ** 2)))


def pd_codec(family, source: GaussianSpec, D: float, calibrate: bool = True, pilot: int = 20_000,
             seed: int = 0) -> CodecConfig:
    """Private-dither codec from the perfect-realism construction.

    The construction's unit synthesis gain is exact only asymptotically; with
    ``calibrate`` the gain is re-matched to the source second moment on a
    seeded pilot run, which matters for coarse lattices.
    """
    n = source.dimension
    p = pd_params(_iid_sigma2(source), D)
    lat = lattice_with_second_moment(family, n, p.lattice_second_moment)
    cfg = CodecConfig.build(Mode.PD, lat, source, AffineTransform.scalar(n, p.alpha),
                            AffineTransform.scalar(n, p.beta), s=p.s)
    if not calibrate:
        return cfg
    gain = p.beta * _matched_gain(cfg, source, pilot, seed, "pd")
    return CodecConfig.build(Mode.PD, lat, source, AffineTransform.scalar(n, p.alpha),
                             AffineTransform.scalar(n, gain), s=p.s)


def qsd_codec(family, source: GaussianSpec, D: float, gamma: int, s: float = 1.0,
              pilot: int = 20_000, seed: int = 0) -> CodecConfig:
    """QSD codec on the SD lattice for target ``D`` with a variance-matched synthesis scale.

    The synthesis gain makes the reconstruction second moment equal the
    source's, measured on a seeded pilot run.
    """
    n = source.dimension
    sigma2 = _iid_sigma2(source)
    lat = lattice_with_second_moment(family, n, sd_params(sigma2, D, 0.0).lattice_second_moment)
    raw = CodecConfig.build(Mode.QSD, lat, source, s=s, gamma=gamma)
    gain = _matched_gain(raw, source, pilot, seed, "qsd")
    return CodecConfig.build(Mode.QSD, lat, source, synthesis=AffineTransform.scalar(n, gain), s=s, gamma=gamma)


def build_codec(mode, family, source: GaussianSpec, D: float, gamma: int = 1, seed: int = 0) -> CodecConfig:
    mode = Mode.parse(mode)
    if mode is Mode.SD:
        return sd_codec(family, source, D)
    if mode is Mode.PD:
        return pd_codec(family, source, D, seed=seed)
    if mode is Mode.QSD:
        return qsd_codec(family, source, D, gamma, seed=seed)
    raise ValueError(f"no zero-perception construction for mode {mode.value}")


@dataclass
class Curve:
    label: str
    targets: list
    points: list

    @property
    def distortions(self) -> np.ndarray:
        return np.array([p.distortion_mse_per_dim for p in self.points])

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rate_bits_per_dim for p in self.points])


def rd_curve(mode, family, source: GaussianSpec, D_targets, budget: EvalBudget, seed: int,
             gamma: int = 1, metric=PerceptionMetric.SLICED) -> Curve:
    """Evaluate the zero-perception construction of ``mode`` at each target distortion."""
    pts = []
    label = f"{Mode.parse(mode).value}{'' if Mode.parse(mode) is not Mode.QSD else gamma}-{family}"
    for i, D in enumerate(D_targets):
        cfg = build_codec(mode, family, source, D, gamma, seed)
        pts.append(evaluate(cfg, source, budget, metric, substream(seed, f"experiments.{label}", i)))
    return Curve(label, list(D_targets), pts)


def matched_rate(curve: Curve, D: float) -> tuple[float, float]:
    """Rate at distortion ``D`` by linear interpolation in log-distortion, with SE.

    The SE includes the distortion uncertainty propagated through the local slope.
    """
    d = curve.distortions
    order = np.argsort(d)
    d = d[order]
    pts = [curve.points[i] for i in order]
    if not d[0] <= D <= d[-1]:
        raise ValueError(f"D={D} outside the measured range [{d[0]:.4g}, {d[-1]:.4g}] of {curve.label}")
    j = min(int(np.searchsorted(d, D, side="right")) - 1, len(d) - 2)
    a, b = pts[j], pts[j + 1]
    la, lb = math.log(a.distortion_mse_per_dim), math.log(b.distortion_mse_per_dim)
    w = (math.log(D) - la) / (lb - la)
    rate = (1 - w) * a.rate_bits_per_dim + w * b.rate_bits_per_dim
    slope = (b.rate_bits_per_dim - a.rate_bits_per_dim) / (lb - la)
    var = ((1 - w) * a.rate_se) ** 2 + (w * b.rate_se) ** 2
    var += slope**2 * (((1 - w) * a.mse_se / a.distortion_mse_per_dim) ** 2
                       + (w * b.mse_se / b.distortion_mse_per_dim) ** 2)
    return rate, math.sqrt(var)


@dataclass(frozen=True)
class Comparison:
    """``lower <= upper`` at distortion ``D`` within ``k`` combined SEs."""

    lower: str
    upper: str
    D: float
    lower_rate: float
    upper_rate: float
    combined_se: float
    k: float = 3.0

    @property
    def margin(self) -> float:
        return self.upper_rate - self.lower_rate

    @property
    def holds(self) -> bool:
        return self.margin >= -self.k * self.combined_se


def compare(lower: Curve, upper: Curve, D: float, k: float = 3.0) -> Comparison:
    rl, sl = matched_rate(lower, D)
    ru, su = matched_rate(upper, D)
    return Comparison(lower.label, upper.label, D, rl, ru, math.hypot(sl, su), k)


@dataclass(frozen=True)
class ConverseCheck:
    label: str
    rate: float
    rate_se: float
    distortion: float
    perception: float
    bound: float
    kind: str
    note: str = "perception measured by sliced W2^2, a proxy for the W2^2 in the bound"

    @property
    def holds(self) -> bool:
        return self.rate >= self.bound - 3 * self.rate_se


def converse_checks(curve: Curve, sigma2: float, pd: bool = False) -> list:
    out = []
    for p in curve.points:
        D = min(p.distortion_mse_per_dim, 2 * sigma2)
        out.append(ConverseCheck(curve.label, p.rate_bits_per_dim, p.rate_se, D, p.perception_per_dim,
                                 gaussian_rdp(sigma2, D, p.perception_per_dim), "R(D,P)"))
        if pd:
            out.append(ConverseCheck(curve.label, p.rate_bits_per_dim, p.rate_se, D, p.perception_per_dim,
                                     gaussian_rdp(sigma2, D / 2, math.inf), "R(D/2,inf)"))
    return out
