"""Command-line entry point: ``ltcrdp <subcommand> ...``.

Exit codes: 0 success, 1 configuration error, 2 numeric/runtime error,
3 selftest failure.  ``LTCRDP_THREADS`` caps BLAS/OpenMP threads.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SELFTEST = 0, 1, 2, 3

CSV_COLUMNS = (
    "run_id", "seed", "mode", "lattice_family", "lattice_scale", "gamma", "s", "rate_bits_per_dim",
    "rate_se", "mse_per_dim", "mse_se", "perception_per_dim", "perception_se", "perception_metric",
    "n_rate", "n_dist", "n_perc", "config_hash",
)


def _apply_thread_env() -> None:
    threads = os.environ.get("LTCRDP_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = threads


def _floats(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        out.append(math.inf if tok in ("inf", "infinity") else float(tok))
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _emit(rows, columns, output: str | None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    if output:
        Path(output).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def _environment() -> dict:
    import numpy
    import scipy

    from . import __version__

    return {"python": platform.python_version(), "platform": platform.platform(), "numpy": numpy.__version__,
            "scipy": scipy.__version__, "ltcrdp": __version__}


def _rd_row(run_id, seed, mode, family, scale, gamma, s, pt, config_hash) -> dict:
    return {
        "run_id": run_id, "seed": seed, "mode": mode, "lattice_family": family, "lattice_scale": float(scale),
        "gamma": gamma, "s": float(s), "rate_bits_per_dim": pt.rate_bits_per_dim, "rate_se": pt.rate_se,
        "mse_per_dim": pt.distortion_mse_per_dim, "mse_se": pt.mse_se,
        "perception_per_dim": pt.perception_per_dim, "perception_se": pt.perception_se,
        "perception_metric": pt.perception_metric.value, "n_rate": pt.n_rate, "n_dist": pt.n_dist,
        "n_perc": pt.n_perc, "config_hash": config_hash,
    }


# --------------------------------------------------------------------------- #
# subcommands


def run_eval(cfg, output: str | None = None) -> list:
    """Evaluate every row of a parsed RunConfig; returns the CSV row dicts."""
    from .codec import AffineTransform, CodecConfig, EvalBudget, Mode
    from .codec import evaluate as evaluate_codec
    from .experiments import build_codec
    from .lattice import build_lattice
    from .metrics import GaussianSpec
    from .seeding import substream

    source = GaussianSpec(list(cfg.mean), list(cfg.diag_cov))
    budget = EvalBudget(**cfg.budgets)
    rows = []
    idx = 0
    for ci, d in enumerate(cfg.codecs):
        for j, param in enumerate(d.sweep()):
            if d.construction == "none":
                n = cfg.dimension
                codec = CodecConfig.build(
                    d.mode, build_lattice(d.family, n, param), source,
                    AffineTransform.scalar(n, d.analysis_scale), AffineTransform.scalar(n, d.synthesis_scale),
                    s=d.s, gamma=d.gamma,
                )
            else:
                codec = build_codec(d.mode, d.family, source, param, d.gamma, cfg.seed)
            pt = evaluate_codec(codec, source, budget, cfg.perception_metric, substream(cfg.seed, "cli.eval", idx))
            mode = Mode.parse(d.mode)
            rows.append(_rd_row(f"{ci:03d}-{j:03d}", cfg.seed, mode.value, codec.lattice.family.value,
                                codec.lattice.scale, codec.gamma, codec.s, pt, cfg.config_hash))
            idx += 1
    return rows


def cmd_eval(args) -> int:
    from .config import load_config

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = type(cfg)(**{**cfg.__dict__, "seed": args.seed})
    output = args.output or cfg.output
    rows = run_eval(cfg)
    _emit(rows, CSV_COLUMNS, output)
    if output:
        sidecar = {"config": cfg.raw, "seed": cfg.seed, "config_hash": cfg.config_hash,
                   "csv_columns": list(CSV_COLUMNS), "environment": _environment(),
                   "notes": "perception via sliced W2^2 is a proxy for the W2^2 in the RDP bound"}
        Path(str(output) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True, default=str))
    return EXIT_OK


def bounds_table(sigma2: float, D_grid, P_list) -> list:
    from .errors import DomainError
    from .metrics import gaussian_rdp

    rows = []
    for D in D_grid:
        for P in P_list:
            row = {"sigma2": sigma2, "D": D, "P": P}
            try:
                row["R_DP"] = gaussian_rdp(sigma2, D, P)
            except DomainError as exc:
                row["R_DP"] = f"error: {exc}"
            try:
                row["R_half_D_inf"] = gaussian_rdp(sigma2, D / 2, math.inf)
            except DomainError as exc:
                row["R_half_D_inf"] = f"error: {exc}"
            rows.append(row)
    return rows


def cmd_bounds(args) -> int:
    rows = bounds_table(args.sigma2, _floats(args.D), _floats(args.P))
    _emit(rows, ("sigma2", "D", "P", "R_DP", "R_half_D_inf"), args.output)
    return EXIT_OK


def cmd_rcc(args) -> int:
    from .metrics import GaussianSpec
    from .rcc import RCCConfig, rcc_evaluate
    from .seeding import substream

    cfg = RCCConfig(GaussianSpec.iid(args.block_dim, args.sigma2), args.D, args.P, args.N, args.seed)
    pt = rcc_evaluate(cfg, args.trials, substream(args.seed, "cli.rcc"), args.block_dim)
    row = _rd_row("rcc-000", args.seed, "RCC", "none", 0.0, 1, 1.0, pt, "")
    _emit([row], CSV_COLUMNS, args.output)
    return EXIT_OK


def cmd_nsm(args) -> int:
    from .lattice import build_lattice, nsm_mc
    from .seeding import substream

    rows = []
    for i, fam in enumerate(args.family.split(",")):
        fam = fam.strip()
        n = 16 if fam.lower() in ("bw16", "barneswall16", "lambda16") else (8 if fam.lower() == "e8" else args.dim)
        lat = build_lattice(fam, n)
        g, se = nsm_mc(lat, args.samples, substream(args.seed, "cli.nsm", i))
        rows.append({"family": lat.family.value, "dimension": n, "nsm": g, "nsm_se": se, "samples": args.samples,
                     "seed": args.seed})
    _emit(rows, ("family", "dimension", "nsm", "nsm_se", "samples", "seed"), args.output)
    return EXIT_OK


def cmd_construct_sd(args) -> int:
    from .theory import sd_params

    rows = []
    for D in _floats(args.D):
        for P in _floats(args.P):
            c = sd_params(args.sigma2, D, P)
            rows.append({"sigma2": args.sigma2, "D": D, "P": P, "branch": c.branch.value,
                         "lattice_second_moment": c.lattice_second_moment, "analysis_scale": c.analysis_scale,
                         "synthesis_scale": c.synthesis_scale})
    _emit(rows, ("sigma2", "D", "P", "branch", "lattice_second_moment", "analysis_scale", "synthesis_scale"),
          args.output)
    return EXIT_OK


def cmd_construct_pd(args) -> int:
    from .theory import pd_params

    rows = []
    for D in _floats(args.D):
        c = pd_params(args.sigma2, D)
        rows.append({"sigma2": args.sigma2, "D": D, "nu": c.nu, "alpha": c.alpha, "beta": c.beta, "s": c.s,
                     "lattice_second_moment": c.lattice_second_moment, "constraint_residual": c.residual})
    _emit(rows, ("sigma2", "D", "nu", "alpha", "beta", "s", "lattice_second_moment", "constraint_residual"),
          args.output)
    return EXIT_OK


def cmd_diag_lattice_gaussian(args) -> int:
    import numpy as np

    from .lattice import build_lattice
    from .seeding import substream
    from .theory import lattice_gaussian_sample

    lat = build_lattice(args.family, args.dim)
    center = np.zeros(lat.dimension) if args.center is None else np.array(_floats(args.center))
    pts = lattice_gaussian_sample(lat, center, args.sigma2, substream(args.seed, "cli.lattice_gaussian"),
                                  size=args.samples).embedding
    per_dim = np.sum((pts - center) ** 2, axis=1) / lat.dimension
    row = {"family": lat.family.value, "dimension": lat.dimension, "sigma2": args.sigma2, "samples": args.samples,
           "second_moment_per_dim": float(per_dim.mean()),
           "second_moment_se": float(per_dim.std(ddof=1) / math.sqrt(len(per_dim))),
           "mean_norm": float(np.linalg.norm(pts.mean(axis=0) - center)), "seed": args.seed}
    _emit([row], tuple(row), args.output)
    return EXIT_OK


def cmd_diag_flatness(args) -> int:
    from .lattice import build_lattice
    from .seeding import substream
    from .theory import flatness_estimate

    lat = build_lattice(args.family, args.dim)
    rows = []
    for i, g in enumerate(_floats(args.gammas)):
        f = flatness_estimate(lat, g, args.probes, substream(args.seed, "cli.flatness", i))
        rows.append({"family": lat.family.value, "dimension": lat.dimension, "gamma": g, "flatness_lower_bound": f.value,
                     "method": f.method, "truncation_bound": f.truncation_bound, "probes": f.n_probes})
    _emit(rows, ("family", "dimension", "gamma", "flatness_lower_bound", "method", "truncation_bound", "probes"),
          args.output)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest(args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:20s} {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST


# --------------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ltcrdp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("eval", help="evaluate codecs described by a TOML config")
    e.add_argument("config")
    e.add_argument("--output", "-o")
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bounds", help="Gaussian RDP reference curves")
    b.add_argument("--sigma2", type=float, default=1.0)
    b.add_argument("--D", default="0.25,0.5,1,2")
    b.add_argument("--P", default="0,inf")
    b.add_argument("--output", "-o")
    b.set_defaults(func=cmd_bounds)

    r = sub.add_parser("rcc", help="reverse channel coding baseline")
    r.add_argument("--sigma2", type=float, default=1.0)
    r.add_argument("--D", type=float, default=0.5)
    r.add_argument("--P", type=float, default=0.0)
    r.add_argument("--N", type=int, default=10_000)
    r.add_argument("--trials", type=int, default=100_000)
    r.add_argument("--block-dim", type=int, default=1)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--output", "-o")
    r.set_defaults(func=cmd_rcc)

    nsm = sub.add_parser("nsm", help="normalized second moments by Monte Carlo")
    nsm.add_argument("--family", default="IntegerZ,DnChecker,DnDual,E8,BarnesWall16")
    nsm.add_argument("--dim", type=int, default=8)
    nsm.add_argument("--samples", type=int, default=1_000_000)
    nsm.add_argument("--seed", type=int, default=0)
    nsm.add_argument("--output", "-o")
    nsm.set_defaults(func=cmd_nsm)

    sd = sub.add_parser("construct-sd", help="shared-dither construction parameters")
    sd.add_argument("--sigma2", type=float, default=1.0)
    sd.add_argument("--D", default="0.5")
    sd.add_argument("--P", default="0")
    sd.add_argument("--output", "-o")
    sd.set_defaults(func=cmd_construct_sd)

    pd = sub.add_parser("construct-pd", help="private-dither construction parameters")
    pd.add_argument("--sigma2", type=float, default=1.0)
    pd.add_argument("--D", default="0.5,1,1.8")
    pd.add_argument("--output", "-o")
    pd.set_defaults(func=cmd_construct_pd)

    lg = sub.add_parser("diag-lattice-gaussian", help="lattice Gaussian sampling diagnostics")
    lg.add_argument("--family", default="IntegerZ")
    lg.add_argument("--dim", type=int, default=1)
    lg.add_argument("--sigma2", type=float, default=1.0)
    lg.add_argument("--center")
    lg.add_argument("--samples", type=int, default=100_000)
    lg.add_argument("--seed", type=int, default=0)
    lg.add_argument("--output", "-o")
    lg.set_defaults(func=cmd_diag_lattice_gaussian)

    fl = sub.add_parser("diag-flatness", help="flatness factor lower bounds")
    fl.add_argument("--family", default="IntegerZ")
    fl.add_argument("--dim", type=int, default=8)
    fl.add_argument("--gammas", default="0.2,0.4,0.8")
    fl.add_argument("--probes", type=int, default=1000)
    fl.add_argument("--seed", type=int, default=0)
    fl.add_argument("--output", "-o")
    fl.set_defaults(func=cmd_diag_flatness)

    st = sub.add_parser("selftest", help="reduced-budget invariant suites")
    st.add_argument("--seed", type=int, default=0)
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    _apply_thread_env()
    from .errors import ConfigError, DomainError, InputError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, DomainError, InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError, MemoryError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
