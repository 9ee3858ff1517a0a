"""Command-line interface.

Every subcommand reads optional defaults from ``--config file.json`` (flat
keys named like the flags, dashes or underscores), lets explicit flags win,
and echoes the realized configuration into its outputs.

Exit codes: 0 ok, 1 a gated check failed, 2 bad input, 3 solver error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io as bio
from .bifurcation import trace, verify_s_shape
from .dynamics import Field, Grid, default_epsilon, integrate
from .errors import BudykoError, InvalidParams, NoBranch, ShapeViolation
from .experiments import (ExperimentConfig, lambda_at_fraction, run_eigen_consistency,
                          run_instability, run_stability)
from .model import ModelParams, RegularizedAlbedo
from .spectral import (SCAN_COLUMNS, instability_sign_scan, lower_branch_problem,
                       principal_eigenvalue)
from .stationary import (BranchTag, build_barriers, compute_critical, enumerate_equilibria,
                         profile_table)

EXIT_OK, EXIT_GATE, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3

INIT_CHOICES = ("lower-minus-theta", "lower-plus-theta", "lower", "upper", "ice",
                "upper-barrier", "lower-barrier")


class UsageError(Exception):
    pass


def _floats(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


# name -> (type, default, help[, shown default]); None as default means derived.
_COMMON = {
    "omega": (float, 1.0, "diffusion-to-radiation ratio omega"),
    "mu": (float, 1.0, "ice-line temperature threshold mu"),
    "f0": (float, 0.5, "co-albedo on ice, 0 < f0 < 1"),
}
_LAMBDA = {
    "lambda": (float, None, "solar constant; overrides --lambda-frac", "from --lambda-frac"),
    "lambda-frac": (float, 0.5, "lambda = lambda1 + frac (lambda2 - lambda1)"),
}
_OPTIONS = {
    "critical": {"out": (str, None, "JSON output path", "stdout")},
    "equilibria": {
        "points": (int, 201, "profile samples per branch"),
        "mirror": (bool, False, "also emit the even extension to [-1, 1]"),
        "out-dir": (str, "equilibria", "directory for profile CSVs and summary.json"),
    },
    "bifurcate": {
        "lambda-min": (float, None, "smallest lambda", "0.5 lambda1"),
        "lambda-max": (float, None, "largest lambda", "1.5 lambda2"),
        "steps": (int, 400, "uniform grid points in lambda"),
        "refine-fold": (bool, True, "add lambda1 (1 + 2**-k), k = 1..20"),
        "out": (str, "bifurcation.csv", "curve CSV path"),
        "summary": (str, "bifurcation.json", "summary JSON path"),
    },
    "eigen": {
        "branch": (str, "Lower", "Lower or Upper"),
        "n": (int, 10_000, "matrix-oracle cells"),
        "slope-weighted": (bool, False, "divide the point mass by |u'(x_fb)|"),
        "scan": (bool, False, "run the sign scan over --omegas x --fracs instead"),
        "omegas": (_floats, "0.25,0.5,0.75,0.99", "comma-separated omega values for --scan"),
        "fracs": (_floats, "0.1,0.5,1.0", "comma-separated lambda fractions for --scan"),
        "out": (str, None, "JSON (single) or CSV (scan) path", "stdout"),
        "eigenfunction": (str, None, "optional CSV path for (x, U)", "not written"),
    },
    "simulate": {
        "init": (str, "lower-minus-theta", "initial datum: " + ", ".join(INIT_CHOICES)),
        "theta": (float, None, "lambda offset of the initial datum", "0.02 (lambda2 - lambda1)"),
        "delta": (float, None, "barrier offset at x = 1", "1e-3 mu"),
        "n": (int, 2000, "grid cells"),
        "dt": (float, None, "time step", "dx"),
        "t-final": (float, None, "final time", "50 / omega**2"),
        "epsilon": (float, None, "regularization half-width", "4 dx |u'(x_fb)|"),
        "snapshot-every": (int, 1000, "steps between stored snapshots"),
        "out-dir": (str, "simulation", "directory for snapshots, fb_track, diagnostics"),
    },
    "experiment": {
        "theta": (float, None, "offset in lambda", "1e-2 lambda (stability), 0.02 (lambda2 - lambda1) (instability)"),
        "delta": (float, None, "barrier offset at x = 1", "1e-3 mu"),
        "n": (int, 2000, "grid cells"),
        "dt": (float, None, "time step", "dx"),
        "t-final": (float, None, "final time",
                    "50 (stability), 50 / omega**2 (instability), 1 / |eta1| (eigen)"),
        "seed": (int, 0, "seed of the perturbation battery"),
        "snapshot-every": (int, 500, "steps between stored snapshots"),
        "out": (str, None, "report JSON path", "stdout"),
    },
}


def _add_options(parser, options):
    for name, (typ, default, text, *shown) in options.items():
        shown = shown[0] if shown else default
        if typ is bool:
            parser.add_argument(f"--{name}", action=argparse.BooleanOptionalAction, default=None,
                                help=f"{text} (default: {shown})")
        else:
            parser.add_argument(f"--{name}", type=typ, default=None,
                                help=f"{text} (default: {shown})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="budyko", description=(
        "Equilibria, bifurcation diagram, principal eigenvalue and time evolution "
        "of a one-dimensional energy balance model with a discontinuous co-albedo."))
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "critical": "critical values lambda1, lambda2 and r*",
        "equilibria": "all monotone equilibria at one lambda",
        "bifurcate": "trace the (lambda, sup-norm) diagram and check its S shape",
        "eigen": "principal eigenvalue at one lambda, or the sign scan",
        "simulate": "integrate the regularized flow from a chosen start",
        "experiment": "run a gated experiment and write its report",
    }
    for cmd, text in helps.items():
        p = sub.add_parser(cmd, help=text, description=text)
        if cmd == "experiment":
            p.add_argument("kind", choices=("stability", "instability", "eigen"))
        p.add_argument("--config", default=None, help="JSON file of defaults (flags win)")
        opts = dict(_COMMON)
        if cmd not in ("critical", "bifurcate"):
            opts.update(_LAMBDA)
        opts.update(_OPTIONS[cmd])
        _add_options(p, opts)
        p.set_defaults(_options=opts)
    return parser


def _resolve(args) -> dict:
    """Defaults, then the config file, then explicit flags."""
    opts = args._options
    cfg = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError("config must be a JSON object")
        for k, v in raw.items():
            key = k.replace("_", "-")
            if key not in opts:
                raise UsageError(f"unknown config key {k!r}")
            typ = opts[key][0]
            cfg[key] = typ(v) if typ is _floats else v
    out = {}
    for name, (typ, default, *_) in opts.items():
        flag = getattr(args, name.replace("-", "_"))
        if flag is not None:
            out[name] = flag
        elif name in cfg:
            out[name] = cfg[name]
        else:
            out[name] = typ(default) if (typ is _floats and default is not None) else default
    return out


def _params(cfg, with_lambda=True) -> ModelParams:
    base = ModelParams(cfg["omega"], cfg["mu"], cfg["f0"], 1.0)
    if not with_lambda:
        return base
    if cfg.get("lambda") is not None:
        return base.with_lambda(cfg["lambda"])
    return base.with_lambda(lambda_at_fraction(base, cfg["lambda-frac"]))


def _emit_json(path, obj):
    if path:
        bio.write_json(path, obj)
    else:
        sys.stdout.write(bio.json_text(obj))


# --- subcommands --------------------------------------------------------------

def cmd_critical(cfg) -> int:
    p = _params(cfg, with_lambda=False)
    crit = compute_critical(p)
    _emit_json(cfg["out"], {
        "config": cfg, **crit.to_dict(),
        "lambda1_above_mu_omega2": crit.lambda1 > p.mu * p.omega**2,
    })
    return EXIT_OK


def cmd_equilibria(cfg) -> int:
    p = _params(cfg)
    sols = enumerate_equilibria(p)
    out_dir = cfg["out-dir"]
    summary = {"config": cfg, "params": p.to_dict(), "count": len(sols), "solutions": []}
    for sol in sols:
        tab = profile_table(sol, cfg["points"], mirror=bool(cfg["mirror"]))
        name = f"profile_{str(sol.branch).lower()}.csv"
        bio.write_csv(os.path.join(out_dir, name), ("x", "u", "uprime", "piece"),
                      zip(tab["x"].tolist(), tab["u"].tolist(), tab["uprime"].tolist(), tab["piece"]))
        summary["solutions"].append({**sol.header(), "file": name})
    bio.write_json(os.path.join(out_dir, "summary.json"), summary)
    sys.stdout.write(bio.json_text(summary))
    return EXIT_OK


def cmd_bifurcate(cfg) -> int:
    base = _params(cfg, with_lambda=False)
    crit = compute_critical(base)
    lo = cfg["lambda-min"] if cfg["lambda-min"] is not None else 0.5 * crit.lambda1
    hi = cfg["lambda-max"] if cfg["lambda-max"] is not None else 1.5 * crit.lambda2
    realized = {**cfg, "lambda-min": lo, "lambda-max": hi}
    curve = trace(base.omega, base.mu, base.f0, lo, hi, cfg["steps"], bool(cfg["refine-fold"]))
    bio.atomic_write(cfg["out"], curve.to_csv())
    summary = {"config": realized, "critical": crit.to_dict(), "records": len(curve.records)}
    code = EXIT_OK
    try:
        summary["s_shape"] = verify_s_shape(curve).to_dict()
        if not summary["s_shape"]["passed"]:
            code = EXIT_GATE
    except ShapeViolation as exc:
        summary["s_shape"] = {"passed": False, "violation": str(exc), "branch": exc.branch,
                              "pair": exc.pair}
        code = EXIT_GATE
    bio.write_json(cfg["summary"], summary)
    sys.stdout.write(bio.json_text(summary))
    return code


def cmd_eigen(cfg) -> int:
    base = _params(cfg, with_lambda=False)
    if cfg["scan"]:
        rows = instability_sign_scan(base.mu, base.f0, cfg["omegas"], cfg["fracs"], cfg["n"])
        text = bio.csv_text(SCAN_COLUMNS, ([r[c] for c in SCAN_COLUMNS] for r in rows))
        if cfg["out"]:
            bio.atomic_write(cfg["out"], text)
        else:
            sys.stdout.write(text)
        bad = [r for r in rows if r["branch"] == "Lower" and 0 < r["omega"] < 1
               and not (r["status"] == "ok" and r["eta1"] < 0)]
        return EXIT_GATE if bad else EXIT_OK
    try:
        branch = BranchTag(cfg["branch"])
    except ValueError as exc:
        raise InvalidParams(f"branch must be Lower or Upper, got {cfg['branch']!r}") from exc
    if branch not in (BranchTag.LOWER, BranchTag.UPPER):
        raise InvalidParams("branch must be Lower or Upper")
    if cfg.get("lambda") is not None:
        crit = compute_critical(base)
        frac = (cfg["lambda"] - crit.lambda1) / (crit.lambda2 - crit.lambda1)
    else:
        frac = cfg["lambda-frac"]
    prob = lower_branch_problem(base, frac, branch, bool(cfg["slope-weighted"]))
    res = principal_eigenvalue(prob, cfg["n"])
    if cfg["eigenfunction"]:
        bio.write_csv(cfg["eigenfunction"], ("x", "U"), zip(res.x.tolist(), res.eigenfunction.tolist()))
    _emit_json(cfg["out"], {
        "config": cfg, "params": prob.params.to_dict(), "branch": str(branch), "x_fb": prob.x_fb,
        "strength": prob.strength, "eta1": res.eta1, "tau": res.tau, "method": res.method,
        "residual": res.residual, "eta1_shooting": res.eta1_shooting,
        "eta1_matrix": res.eta1_matrix, "rho": res.eta1 - prob.params.omega**2,
    })
    return EXIT_OK


def _initial_datum(kind, p, theta, delta, grid):
    from .experiments import _branch  # shared branch lookup
    crit = compute_critical(p)
    x = grid.x
    if kind == "ice":
        from .stationary import build_ice_covered
        return build_ice_covered(p).u(x)
    if kind in ("lower", "upper"):
        return _branch(p, BranchTag(kind.capitalize())).u(x)
    if kind == "lower-minus-theta":
        return _branch(p.with_lambda(p.lam - theta), BranchTag.LOWER).u(x)
    if kind == "lower-plus-theta":
        if p.lam + theta >= crit.lambda2:
            raise NoBranch("lambda + theta is not below lambda2")
        return _branch(p.with_lambda(p.lam + theta), BranchTag.LOWER).u(x)
    bp = build_barriers(p, theta, delta)
    return (bp.upper if kind == "upper-barrier" else bp.lower).u(x)


def cmd_simulate(cfg) -> int:
    p = _params(cfg)
    if cfg["init"] not in INIT_CHOICES:
        raise InvalidParams(f"--init must be one of {', '.join(INIT_CHOICES)}")
    crit = compute_critical(p)
    grid = Grid(cfg["n"])
    theta = cfg["theta"]
    if theta is None:
        theta = 1e-2 * p.lam if cfg["init"].endswith("barrier") else 0.02 * (crit.lambda2 - crit.lambda1)
    delta = cfg["delta"] if cfg["delta"] is not None else 1e-3 * p.mu
    dt = cfg["dt"] if cfg["dt"] is not None else grid.dx
    t_final = cfg["t-final"] if cfg["t-final"] is not None else 50.0 / p.omega**2
    eps = cfg["epsilon"]
    if eps is None:
        slope = None
        sols = [s for s in enumerate_equilibria(p) if s.x_fb is not None]
        if sols:
            pick = {s.branch: s for s in sols}
            s = pick.get(BranchTag.UPPER if "upper" in cfg["init"] else BranchTag.LOWER, sols[0])
            slope = s.du(s.x_fb, "left")
        eps = default_epsilon(grid, p, slope)
    realized = {**cfg, "lambda": p.lam, "theta": theta, "delta": delta, "dt": dt,
                "t-final": t_final, "epsilon": eps}
    u0 = Field(grid, _initial_datum(cfg["init"], p, theta, delta, grid))
    tr = integrate(u0, p, RegularizedAlbedo(p, eps), dt, t_final, cfg["snapshot-every"])
    out = cfg["out-dir"]
    x = grid.x.tolist()
    bio.write_csv(os.path.join(out, "snapshots.csv"), ("t", "x", "u"),
                  ((s.time, xi, ui) for s in tr.snapshots for xi, ui in zip(x, s.values.tolist())))
    bio.write_csv(os.path.join(out, "fb_track.csv"), ("t", "x_fb", "crossings"),
                  ((t, xf, int(c)) for (t, xf), c in zip(tr.fb_track, tr.fb_count)))
    names = [k for k in tr.diagnostics if k not in ("lower_margin", "upper_margin")]
    cols = [tr.diagnostics[k].tolist() for k in names]
    bio.write_csv(os.path.join(out, "diagnostics.csv"), names, zip(*cols))
    summary = {"config": realized, "params": p.to_dict(), "steps": len(tr.diagnostics["time"]) - 1,
               "snapshots": len(tr.snapshots), "converged_time": tr.converged_time,
               "final_sup": float(np.max(np.abs(tr.final.values))),
               "final_crossings": int(tr.fb_count[-1])}
    bio.write_json(os.path.join(out, "summary.json"), summary)
    sys.stdout.write(bio.json_text(summary))
    return EXIT_OK


def cmd_experiment(cfg, kind) -> int:
    p = _params(cfg)
    conf = ExperimentConfig(p, theta=cfg["theta"], delta=cfg["delta"], n=cfg["n"], dt=cfg["dt"],
                            t_final=cfg["t-final"], seed=cfg["seed"],
                            snapshot_every=cfg["snapshot-every"])
    runner = {"stability": run_stability, "instability": run_instability,
              "eigen": run_eigen_consistency}[kind]
    report = runner(conf)
    doc = {"cli_config": cfg, **report.to_dict()}
    _emit_json(cfg["out"], doc)
    return EXIT_GATE if report.verdict == "fail" else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        if args.command == "experiment":
            return cmd_experiment(cfg, args.kind)
        return globals()[f"cmd_{args.command}"](cfg)
    except (UsageError, InvalidParams, NoBranch, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (BudykoError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
