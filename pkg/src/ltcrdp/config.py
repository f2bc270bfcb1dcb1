"""TOML run configuration for ``ltcrdp eval``.

Schema (all sections except ``[[codecs]]`` are optional)::

    seed = 1
    perception_metric = "SlicedW2Sq"      # or "ExactGaussianW2Sq"

    [source]
    dimension = 8
    sigma2 = 1.0                          # or: mean = [...], diag_cov = [...]

    [budgets]
    n_rate_outer = 20000
    n_rate_inner = 256
    n_dist = 100000
    n_perc = 10000
    n_projections = 50
    rate_estimator = "model"              # "plugin" for Deterministic/PD only

    [output]
    path = "results.csv"                  # JSON sidecar written next to it

    [[codecs]]
    mode = "SD"                           # Deterministic | PD | SD | QSD
    family = "E8"
    scale = 1.0                           # or scales = [0.5, 1.0, 2.0]
    s = 1.0                               # PD and QSD
    gamma = 1                             # QSD
    analysis_scale = 1.0
    synthesis_scale = 1.0

A codec may instead use ``construction = "zero-perception"`` with
``target_D`` (or ``targets_D``), which builds the closed-form realism-matched
codec for that distortion.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

_TOP_KEYS = {"seed", "perception_metric", "source", "budgets", "output", "codecs"}
_CODEC_KEYS = {"mode", "family", "dimension", "scale", "scales", "s", "gamma", "analysis_scale",
               "synthesis_scale", "construction", "target_D", "targets_D", "label"}
_BUDGET_KEYS = {"n_rate_outer", "n_rate_inner", "n_dist", "n_perc", "n_projections", "rate_estimator"}
_MODES = {"deterministic", "pd", "sd", "qsd"}
_METRICS = {"slicedw2sq", "exactgaussianw2sq"}


@dataclass(frozen=True)
class CodecDescriptor:
    mode: str
    family: str
    scales: tuple = ()
    s: float = 1.0
    gamma: int = 1
    analysis_scale: float = 1.0
    synthesis_scale: float = 1.0
    construction: str = "none"
    targets_D: tuple = ()
    label: str = ""

    def sweep(self) -> list:
        """Per-row parameter: lattice scales, or target distortions for constructions."""
        return list(self.targets_D) if self.construction != "none" else list(self.scales)


@dataclass(frozen=True)
class RunConfig:
    seed: int
    dimension: int
    mean: tuple
    diag_cov: tuple
    budgets: dict
    perception_metric: str
    codecs: tuple
    output: str | None
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _locate(text: str, codec_index: int | None, key: str | None) -> str:
    """Best-effort ``line N`` for a key, optionally inside the i-th ``[[codecs]]`` table."""
    lines = text.splitlines()
    start, stop = 0, len(lines)
    if codec_index is not None:
        heads = [i for i, ln in enumerate(lines) if re.match(r"\s*\[\[\s*codecs\s*\]\]", ln)]
        if codec_index < len(heads):
            start = heads[codec_index]
            nxt = [i for i, ln in enumerate(lines) if i > start and re.match(r"\s*\[", ln)]
            stop = nxt[0] if nxt else len(lines)
            if key is None:
                return f"line {start + 1}"
    if key is not None:
        pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
        for i in range(start, stop):
            if pat.match(lines[i]):
                return f"line {i + 1}"
    return f"line {start + 1}" if codec_index is not None else "top level"


class _Validator:
    def __init__(self, text: str):
        self.text = text

    def fail(self, msg: str, codec: int | None = None, key: str | None = None):
        where = _locate(self.text, codec, key)
        prefix = f"codecs[{codec}]." if codec is not None else ""
        raise ConfigError(f"{where}: {prefix}{key + ': ' if key else ''}{msg}")

    def number(self, table, key, default, codec=None, positive=False, integer=False, minimum=None):
        v = table.get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"expected a number, got {v!r}", codec, key)
        if integer and (not float(v).is_integer()):
            self.fail(f"expected an integer, got {v!r}", codec, key)
        if not math.isfinite(v):
            self.fail("must be finite", codec, key)
        if positive and v <= 0:
            self.fail(f"must be positive, got {v}", codec, key)
        if minimum is not None and v < minimum:
            self.fail(f"must be >= {minimum}, got {v}", codec, key)
        return int(v) if integer else float(v)


def parse_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    v = _Validator(text)
    unknown = set(data) - _TOP_KEYS
    if unknown:
        v.fail(f"unknown keys {sorted(unknown)}", key=sorted(unknown)[0])

    seed = v.number(data, "seed", 0, integer=True, minimum=0)
    metric = str(data.get("perception_metric", "SlicedW2Sq"))
    if metric.lower() not in _METRICS:
        v.fail(f"unknown perception metric {metric!r}", key="perception_metric")

    src = data.get("source", {})
    if "diag_cov" in src or "mean" in src:
        cov = src.get("diag_cov")
        mean = src.get("mean", [0.0] * len(cov or []))
        if not isinstance(cov, list) or not isinstance(mean, list) or len(cov) != len(mean) or not cov:
            v.fail("mean and diag_cov must be equal-length non-empty lists", key="diag_cov")
        if any((not isinstance(c, (int, float))) or c <= 0 for c in cov):
            v.fail("diag_cov entries must be positive numbers", key="diag_cov")
        dim = len(cov)
        mean, cov = tuple(float(m) for m in mean), tuple(float(c) for c in cov)
    else:
        dim = v.number(src, "dimension", 8, integer=True, minimum=1)
        sigma2 = v.number(src, "sigma2", 1.0, positive=True)
        mean, cov = (0.0,) * dim, (sigma2,) * dim

    b = data.get("budgets", {})
    bad = set(b) - _BUDGET_KEYS
    if bad:
        v.fail(f"unknown budget keys {sorted(bad)}", key=sorted(bad)[0])
    budgets = {
        "n_rate_outer": v.number(b, "n_rate_outer", 20_000, integer=True, minimum=1000),
        "n_rate_inner": v.number(b, "n_rate_inner", 256, integer=True, minimum=64),
        "n_dist": v.number(b, "n_dist", 100_000, integer=True, minimum=2),
        "n_perc": v.number(b, "n_perc", 10_000, integer=True, minimum=2),
        "n_projections": v.number(b, "n_projections", 50, integer=True, minimum=1),
        "rate_estimator": str(b.get("rate_estimator", "model")),
    }
    if budgets["rate_estimator"] not in ("model", "plugin"):
        v.fail("rate_estimator must be 'model' or 'plugin'", key="rate_estimator")

    raw_codecs = data.get("codecs")
    if not isinstance(raw_codecs, list) or not raw_codecs:
        v.fail("at least one [[codecs]] table is required", key="codecs")
    codecs = []
    for i, c in enumerate(raw_codecs):
        bad = set(c) - _CODEC_KEYS
        if bad:
            v.fail(f"unknown keys {sorted(bad)}", i, sorted(bad)[0])
        mode = str(c.get("mode", ""))
        if mode.lower() not in _MODES:
            v.fail(f"mode must be one of Deterministic, PD, SD, QSD; got {mode!r}", i, "mode")
        family = str(c.get("family", ""))
        from .lattice import build_lattice

        try:
            build_lattice(family, dim)
        except ConfigError as exc:
            v.fail(str(exc), i, "family")
        if "dimension" in c and int(c["dimension"]) != dim:
            v.fail(f"dimension {c['dimension']} differs from the source dimension {dim}", i, "dimension")
        construction = str(c.get("construction", "none"))
        if construction not in ("none", "zero-perception"):
            v.fail("construction must be 'none' or 'zero-perception'", i, "construction")
        s = v.number(c, "s", 1.0, i, minimum=1.0)
        gamma = v.number(c, "gamma", 1, i, integer=True, minimum=1)
        if mode.lower() not in ("pd", "qsd") and "s" in c and s != 1.0:
            v.fail("s applies to PD and QSD only", i, "s")
        if mode.lower() != "qsd" and "gamma" in c and gamma != 1:
            v.fail("gamma applies to QSD only", i, "gamma")
        scales, targets = (), ()
        if construction == "none":
            if "scales" in c:
                if not isinstance(c["scales"], list) or not c["scales"]:
                    v.fail("scales must be a non-empty list", i, "scales")
                scales = tuple(v.number({"x": x}, "x", None, i, positive=True) for x in c["scales"])
            else:
                scales = (v.number(c, "scale", 1.0, i, positive=True),)
        else:
            if mode.lower() == "deterministic":
                v.fail("the zero-perception construction needs PD, SD or QSD", i, "construction")
            key = "targets_D" if "targets_D" in c else "target_D"
            vals = c.get(key)
            vals = vals if isinstance(vals, list) else [vals]
            if any(not isinstance(x, (int, float)) or x <= 0 for x in vals):
                v.fail("target distortions must be positive numbers", i, key)
            targets = tuple(float(x) for x in vals)
        codecs.append(CodecDescriptor(
            mode=mode, family=family, scales=scales, s=s, gamma=gamma,
            analysis_scale=v.number(c, "analysis_scale", 1.0, i),
            synthesis_scale=v.number(c, "synthesis_scale", 1.0, i),
            construction=construction, targets_D=targets, label=str(c.get("label", "")),
        ))
    out = data.get("output", {}).get("path")
    return RunConfig(seed, dim, mean, cov, budgets, metric, tuple(codecs), out, data)


def load_config(path: "str | Path") -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
