"""Reduced-budget invariant suites behind ``ltcrdp selftest``.

Statistical checks here use 4 standard errors and Bonferroni-corrected KS
levels so that a correct build passes for any seed; the acceptance tests use
the tighter pinned tolerances with fixed seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import ks_2samp

from .codec import (
    CodecConfig,
    EvalBudget,
    evaluate,
    rate_conditional_mc,
    rate_noisy_proxy_mc,
    roundtrip,
    verify_pd_sd_identity,
)
from .dither import sample_cell_uniform
from .lattice import build_lattice, nearest_point, nearest_point_oracle
from .metrics import GaussianSpec
from .seeding import substream

FAMILIES = (("IntegerZ", 8), ("DnChecker", 8), ("DnDual", 8), ("E8", 8), ("BarnesWall16", 16))


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str


def oracle_mismatches(family: str, n: int, inputs: np.ndarray) -> int:
    """Count inputs where the fast decoder disagrees with the enumeration oracle."""
    lat = build_lattice(family, n)
    fast = nearest_point(lat, inputs).embedding
    bad = 0
    for x, f in zip(inputs, fast):
        d_fast = float(np.sum((f - x) ** 2))
        ref = nearest_point_oracle(lat, x, math.sqrt(d_fast) + 1e-6).embedding
        if float(np.sum((ref - x) ** 2)) != d_fast or not np.array_equal(ref, f):
            bad += 1
    return bad


def suite_oracle(seed: int, count: int = 200) -> SuiteResult:
    worst = []
    for i, (fam, n) in enumerate(FAMILIES):
        rng = substream(seed, "selftest.oracle", i)
        x = np.vstack([rng.standard_normal((count, n)),
                       rng.integers(-4, 5, size=(count // 4, n)) / 2.0])
        bad = oracle_mismatches(fam, n, x)
        worst.append(f"{fam}:{bad}")
        if bad:
            return SuiteResult("oracle-equivalence", False, f"{fam} mismatches on {bad} inputs")
    return SuiteResult("oracle-equivalence", True, " ".join(worst))


def suite_crypto(seed: int, samples: int = 20_000) -> SuiteResult:
    lat = build_lattice("E8", 8)
    src = GaussianSpec.iid(8)
    cfg = CodecConfig.build("SD", lat, src)
    rng = substream(seed, "selftest.crypto")
    x = src.sample(rng, samples)
    resid = roundtrip(cfg, x, rng) - x
    ref = sample_cell_uniform(lat, rng, size=samples)
    alpha = 0.01 / lat.dimension
    pmin = min(ks_2samp(resid[:, j], ref[:, j]).pvalue for j in range(lat.dimension))
    e1 = np.sum(resid**2, axis=1) / 8
    e2 = np.sum(ref**2, axis=1) / 8
    z = (e1.mean() - e2.mean()) / math.sqrt(e1.var(ddof=1) / samples + e2.var(ddof=1) / samples)
    ok = bool(pmin > alpha and abs(z) < 4)
    return SuiteResult("crypto-lemma", ok, f"min KS p={pmin:.3g} (level {alpha:.2g}), moment z={z:.2f}")


def suite_identity(seed: int, samples: int = 20_000) -> SuiteResult:
    zs = []
    for i, (fam, s) in enumerate([("IntegerZ", 1.0), ("E8", 2.0)]):
        rep = verify_pd_sd_identity(build_lattice(fam, 8), s, samples, substream(seed, "selftest.identity", i))
        zs.append(rep.z_score)
    ok = all(abs(z) < 4 for z in zs)
    return SuiteResult("pd-sd-identity", ok, "z=" + ",".join(f"{z:.2f}" for z in zs))


def suite_rate(seed: int, n_outer: int = 3000) -> SuiteResult:
    src = GaussianSpec.iid(8)
    cfg = CodecConfig.build("SD", build_lattice("IntegerZ", 8), src)
    a = rate_conditional_mc(cfg, src, n_outer, 128, substream(seed, "selftest.rate", 0))
    b = rate_noisy_proxy_mc(cfg, src, n_outer, 128, substream(seed, "selftest.rate", 1))
    z = (a.value - b.value) / math.hypot(a.se, b.se)
    return SuiteResult("rate-equivalence", abs(z) < 4, f"conditional={a.value:.4f} proxy={b.value:.4f} z={z:.2f}")


def suite_qsd(seed: int) -> SuiteResult:
    src = GaussianSpec.iid(8)
    lat = build_lattice("E8", 8, 0.8)
    budget = EvalBudget(n_rate_outer=1000, n_rate_inner=64, n_dist=2000, n_perc=1000, n_projections=10)
    p = evaluate(CodecConfig.build("PD", lat, src, s=1.5), src, budget, rng=seed)
    q = evaluate(CodecConfig.build("QSD", lat, src, s=1.5, gamma=1), src, budget, rng=seed)
    fields = ("rate_bits_per_dim", "rate_se", "distortion_mse_per_dim", "mse_se", "perception_per_dim",
              "perception_se")
    same = all(getattr(p, f) == getattr(q, f) for f in fields)
    return SuiteResult("qsd-gamma1", same, "identical" if same else "PD and QSD(gamma=1) differ")


SUITES = (suite_oracle, suite_crypto, suite_identity, suite_rate, suite_qsd)


def run_selftest(seed: int = 0) -> list:
    return [suite(seed) for suite in SUITES]
