"""Command-line entry point: ``sksfem <experiment> [flags]``.

Every run writes into ``--out``:

* ``manifest.json`` and ``config.txt`` (re-runnable with ``--config``);
* ``summary.json`` with the headline numbers of the experiment;
* experiment CSVs (schemas below), or ``error.json`` on failure.

CSV schemas (column order is fixed, floats are written with ``repr``):

==================  ==========================================================
trajectory.csv      n, t_n, coefficient_0 .. coefficient_{N-1}
increments.csv      level, index, value
rates.csv           quantity, resolution, abscissa, error, std_error, slope,
                    intercept, residual, ci_halfwidth
raw_norms.csv       path, resolution, sup_l2, h2
localized.csv       N, h, rho, probability, localized_l2, unlocalized_l2,
                    localized_h2, unlocalized_h2
moments.csv         M, quantity, estimate, std_error
holder.csv          m, q, gap, gap_time, quotient
exp_moment.csv      path, exponent
gronwall.csv        instance, n, q, alpha, lhs, rhs, lhs_std_error, holds
==================  ==========================================================
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np
import scipy

from . import __version__, experiments, inequalities
from ._backend import BACKEND
from .config import KINDS, ConfigError, RunConfig, format_config, load_config, u0_function
from .noise import RNG_ALGORITHM, path_seed, sample_path
from .spline import build_space
from .stepper import NewtonDivergence, SchemeParams, assemble_operators, run_path

__all__ = ["main", "run", "build_parser", "EXIT_OK", "EXIT_CONFIG", "EXIT_DIVERGENCE",
           "EXIT_INVARIANT"]

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_INVARIANT = 0, 1, 2, 3, 4

SEED_SPLIT = "SeedSequence(entropy=seed, spawn_key=(experiment_code, path_index))"

# flag -> (config key, type)
_FLAGS = {
    "--seed": ("seed", int), "--out": ("out", str), "--workers": ("workers", int),
    "--nu": ("nu", float), "--L": ("L", str), "--T": ("T", float), "--N": ("N", int),
    "--M": ("M", int), "--r": ("r", int), "--model": ("model", str), "--mc": ("mc", int),
    "--q": ("q", str), "--beta": ("beta", float), "--ce": ("ce", float),
    "--kappa": ("kappa", str), "--lam": ("lam", float), "--L0": ("L0", str),
    "--C-B": ("C_B", str), "--N-list": ("N_list", str), "--N-ref": ("N_ref", int),
    "--M-list": ("M_list", str), "--M-ref": ("M_ref", int), "--u0": ("u0", str),
    "--u0-amp": ("u0_amp", float), "--newton-tol": ("newton_tol", float),
    "--newton-max-iter": ("newton_max_iter", int),
    "--instances": ("gronwall_instances", int),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sksfem", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="experiment")
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", help="key = value config file; flags override it")
        for flag, (key, typ) in _FLAGS.items():
            p.add_argument(flag, dest=key, type=typ, default=None)
        p.add_argument("--dump-matrices", action="store_true",
                       help="write assembled matrices as (row, col, value) triplets")
        p.add_argument("--dump-increments", action="store_true",
                       help="write the Wiener increments of every level (simulate only)")
    return parser


def _overrides(ns: argparse.Namespace) -> dict:
    out = {"kind": ns.kind}
    for key, _ in _FLAGS.values():
        val = getattr(ns, key)
        if val is not None:
            out[key] = val
    if ns.dump_matrices:
        out["dump_matrices"] = True
    return out


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for row in rows:
            out.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _manifest(cfg: RunConfig, outputs) -> dict:
    return {
        "version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.content_hash(),
        "seed": {"master": cfg.seed, "experiment_code": experiments.EXPERIMENT_CODES[cfg.kind],
                 "split": SEED_SPLIT},
        "rng_algorithm": RNG_ALGORITHM,
        "backend": BACKEND,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "hypotheses": experiments.theorem_hypotheses(cfg),
        "outputs": {name: _sha256(os.path.join(cfg.out, name)) for name in sorted(outputs)},
    }


# --------------------------------------------------------------------------- experiments


def _simulate(cfg: RunConfig, ns) -> tuple[dict, list]:
    space = build_space(cfg.L, cfg.N, cfg.r)
    params = SchemeParams(nu=cfg.nu, T=cfg.T, M=cfg.M, newton_tol=cfg.newton_tol,
                          newton_max_iter=cfg.newton_max_iter)
    model = experiments.model_from_config(cfg)
    seed = path_seed(cfg.seed, experiments.EXPERIMENT_CODES["simulate"], 0)
    path = sample_path(seed, cfg.T, cfg.M.bit_length() - 1)
    ops = assemble_operators(space, params)
    traj = run_path(space, params, model, u0_function(cfg), path, ops)
    traj.metadata["seed"] = [cfg.seed, experiments.EXPERIMENT_CODES["simulate"], 0]
    traj.export(os.path.join(cfg.out, "trajectory.csv"), os.path.join(cfg.out, "trajectory.json"))
    outputs = ["trajectory.csv", "trajectory.json"]
    if ns is not None and ns.dump_increments:
        path.export_csv(os.path.join(cfg.out, "increments.csv"))
        outputs.append("increments.csv")
    if cfg.dump_matrices:
        for name in ("mass", "bending", "gradient", "system"):
            getattr(ops, name).dump(os.path.join(cfg.out, f"{name}.txt"))
            outputs.append(f"{name}.txt")
    mass = ops.mass
    final = traj.states[-1]
    summary = {"final_l2": float(np.sqrt(max(final @ mass.matvec(final), 0.0))),
               "max_newton_iterations": int(traj.newton_iterations.max()),
               "max_final_residual": float(traj.final_residuals.max())}
    return summary, outputs


def _rate_outputs(cfg: RunConfig, study) -> tuple[dict, list]:
    _write_csv(os.path.join(cfg.out, "rates.csv"),
               ["quantity", "resolution", "abscissa", "error", "std_error", "slope", "intercept",
                "residual", "ci_halfwidth"], study.table_rows())
    _write_csv(os.path.join(cfg.out, "raw_norms.csv"), ["path", "resolution", "sup_l2", "h2"],
               study.raw_rows())
    summary = {"abscissa": study.abscissa_name,
               "slopes": {name: rep.slope for name, rep in study.rates.items()},
               "ci_halfwidths": {name: rep.ci_halfwidth for name, rep in study.rates.items()},
               "primary": study.primary, "slope": study.rate.slope}
    if "projection" in study.extra:
        summary["projection_slope"] = study.extra["projection"].slope
    return summary, ["rates.csv", "raw_norms.csv"]


def _localized(cfg: RunConfig, ns) -> tuple[dict, list]:
    rep = experiments.localized_error(cfg)
    _write_csv(os.path.join(cfg.out, "localized.csv"),
               ["N", "h", "rho", "probability", "localized_l2", "unlocalized_l2", "localized_h2",
                "unlocalized_h2"], rep.rows())
    _write_csv(os.path.join(cfg.out, "raw_norms.csv"), ["path", "ref_sup_l2_sq"],
               ((i, float(v)) for i, v in enumerate(rep.ref_sup)))
    summary = {"probability": rep.probability.tolist(), "rho": rep.rho.tolist()}
    return summary, ["localized.csv", "raw_norms.csv"]


def _stability(cfg: RunConfig, ns) -> tuple[dict, list]:
    rep = experiments.stability_stats(cfg)
    _write_csv(os.path.join(cfg.out, "moments.csv"), ["M", "quantity", "estimate", "std_error"],
               rep.rows())
    a, b = (rep.h2_sums[M][0] for M in rep.resolutions)
    summary = {"h2_sum_ratio": max(a, b) / min(a, b) if min(a, b) > 0 else float("inf"),
               "finite": bool(all(np.isfinite(v[0]) for v in rep.sup_moments.values()))}
    return summary, ["moments.csv"]


def _holder(cfg: RunConfig, ns) -> tuple[dict, list]:
    table = experiments.holder_quotients(cfg, q_list=(1.0,))
    _write_csv(os.path.join(cfg.out, "holder.csv"), ["m", "q", "gap", "gap_time", "quotient"],
               table.rows())
    summary = {f"spread[m={m},q={q:g}]": table.spread(m, q) for (m, q) in table.quotients}
    return summary, ["holder.csv"]


def _exp_moment(cfg: RunConfig, ns) -> tuple[dict, list]:
    rep = experiments.exp_moment_stats(cfg)
    _write_csv(os.path.join(cfg.out, "exp_moment.csv"), ["path", "exponent"],
               ((i, float(v)) for i, v in enumerate(rep.exponents)))
    summary = {"kappa": rep.kappa, "threshold": rep.threshold, "mean": rep.mean,
               "std_error": rep.std_error, "mean_half": rep.mean_half,
               "difference_se": rep.difference_se, "stable": rep.stable, "samples": rep.samples}
    return summary, ["exp_moment.csv"]


def _gronwall(cfg: RunConfig, ns) -> tuple[dict, list]:
    rows, violations = [], 0
    seed = path_seed(cfg.seed, experiments.EXPERIMENT_CODES["gronwall-check"])
    gen = inequalities.random_instances(seed, cfg.gronwall_instances, max_n=cfg.gronwall_n,
                                        samples=cfg.gronwall_samples)
    for i, inst in enumerate(gen):
        chk = inequalities.verify_bound(inst)
        violations += not chk.holds
        rows.append((i, inst.n, inst.q, inst.alpha, chk.lhs, chk.rhs, chk.lhs_std_error,
                     int(chk.holds)))
    _write_csv(os.path.join(cfg.out, "gronwall.csv"),
               ["instance", "n", "q", "alpha", "lhs", "rhs", "lhs_std_error", "holds"], rows)
    summary = {"instances": len(rows), "violations": violations,
               "max_ratio": max(r[4] / r[5] for r in rows)}
    return summary, ["gronwall.csv"]


def _convergence_time(cfg, ns):
    return _rate_outputs(cfg, experiments.temporal_rate(cfg))


def _convergence_space(cfg, ns):
    return _rate_outputs(cfg, experiments.spatial_rate(cfg))


_DISPATCH = {"simulate": _simulate, "convergence-time": _convergence_time,
             "convergence-space": _convergence_space, "stability": _stability,
             "holder": _holder, "exp-moment": _exp_moment, "localized": _localized,
             "gronwall-check": _gronwall}


def run(cfg: RunConfig, ns=None) -> int:
    """Run the configured experiment and write its outputs; returns the exit status."""
    os.makedirs(cfg.out, exist_ok=True)
    err_path = os.path.join(cfg.out, "error.json")
    if os.path.exists(err_path):
        os.remove(err_path)
    try:
        summary, outputs = _DISPATCH[cfg.kind](cfg, ns)
    except NewtonDivergence as exc:
        _write_json(err_path, dict(exc.details(), experiment=cfg.kind))
        return EXIT_DIVERGENCE
    except experiments.InvariantViolation as exc:
        _write_json(err_path, {"error": "InvariantViolation", "message": str(exc),
                               "experiment": cfg.kind})
        return EXIT_INVARIANT
    except (experiments.ExpMomentOverflow, ValueError) as exc:
        _write_json(err_path, {"error": type(exc).__name__, "message": str(exc),
                               "experiment": cfg.kind})
        return EXIT_CONFIG
    summary = dict(summary, experiment=cfg.kind)
    _write_json(os.path.join(cfg.out, "summary.json"), summary)
    with open(os.path.join(cfg.out, "config.txt"), "w") as fh:
        fh.write(format_config(cfg))
    outputs = outputs + ["summary.json", "config.txt"]
    _write_json(os.path.join(cfg.out, "manifest.json"), _manifest(cfg, outputs))
    return EXIT_OK


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = load_config(ns.config, _overrides(ns))
    except (ConfigError, OSError) as exc:
        out = ns.out or "."
        payload = {"error": type(exc).__name__, "message": str(exc),
                   "key": getattr(exc, "key", None), "line": getattr(exc, "line", None)}
        print(json.dumps(payload), file=sys.stderr)
        if ns.out:
            os.makedirs(out, exist_ok=True)
            _write_json(os.path.join(out, "error.json"), payload)
        return EXIT_CONFIG
    status = run(cfg, ns)
    if status != EXIT_OK:
        with open(os.path.join(cfg.out, "error.json")) as fh:
            print(fh.read(), file=sys.stderr, end="")
    return status


if __name__ == "__main__":
    sys.exit(main())
