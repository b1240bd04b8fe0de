"""``cyclic-rdp`` command-line tool.

Usage::

    cyclic-rdp bound|plan|simulate|verify|sweep --config CONFIG [--out PATH] [--seed N]

Exit codes: 0 success, 1 a verification suite failed, 2 invalid config.
Reports are JSON, sweeps are CSV. Infinite values are written as ``"inf"``
and finite floats with ``repr`` so they round-trip exactly.
"""

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys

import numpy as np

from cyclic_rdp import config as config_mod
from cyclic_rdp.accountant import (
    Regime,
    all_bounds,
    best_bound,
    bound_tstar,
    pabi_baseline,
    rdp_to_dp,
)
from cyclic_rdp.config import ConfigError, RunConfig
from cyclic_rdp.divergence import lipschitz_constant
from cyclic_rdp.oracle import suites
from cyclic_rdp.oracle.density import GridSpec, oracle_divergence
from cyclic_rdp.planner import epoch_independent_bound, epoch_independent_stepsize, plan_for_epsilon
from cyclic_rdp.sim import (
    first_divergence_index,
    first_use_step,
    generate_quadratic_dataset,
    make_neighbor,
    run_pair,
)

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_BAD_CONFIG = 0, 1, 2

GUARANTEE_REGIMES = (
    Regime.CURVATURE_INDEPENDENT,
    Regime.DIAMETER,
    Regime.MULTI_EPOCH,
    Regime.MULTI_EPOCH_CONVEX,
)


def format_number(x) -> str:
    """Text form of a number for CSV cells: ``repr`` for floats, ``"inf"`` for infinity."""
    if isinstance(x, bool) or x is None:
        return "" if x is None else str(x).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def plain(obj):
    """JSON-safe copy with non-finite floats turned into strings."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return format_number(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dumps(report) -> str:
    return json.dumps(plain(report), indent=2) + "\n"


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


def cmd_bound(cfg: RunConfig) -> dict:
    p = config_mod.privacy_params(cfg)
    c = config_mod.curvature_spec(cfg)
    reports = all_bounds(p, c)
    best = best_bound(p, c)
    out = {
        "command": "bound",
        "params": {
            "alpha": p.alpha, "sigma": p.sigma, "lam": p.lam, "C": p.C,
            "b": p.b, "k": p.k, "T": p.T, "ell": p.ell, "E": p.E,
        },
        "curvature": {"m": c.m, "M": c.M, "d_h": c.d_h},
        "lipschitz": lipschitz_constant(p.lam, c.m, c.M),
        "bounds": [r.to_dict() for r in reports],
        "best": best.to_dict(),
    }
    if "pabi_Q" in cfg.privacy:
        out["pabi"] = _build(lambda: pabi_baseline(p, cfg.privacy["pabi_Q"])).to_dict()
    if "t_star" in cfg.privacy:
        out["tstar"] = _build(lambda: bound_tstar(p, c, cfg.privacy["t_star"])).to_dict()
    out["dp"] = [
        {"delta": d, "epsilon": rdp_to_dp(best.value, p.alpha, d)} for d in config_mod.deltas(cfg)
    ]
    if not best.valid:
        _warn("no regime applies; best bound is inf")
    return out


def _build(fn):
    try:
        return fn()
    except ValueError as err:
        raise ConfigError(str(err)) from err


def cmd_plan(cfg: RunConfig) -> dict:
    priv = config_mod.require(cfg, "privacy", ("alpha", "epsilon", "epochs", "C", "b"))
    curv = config_mod.require(cfg, "curvature", ("m", "M"))
    alpha, eps, E = priv["alpha"], priv["epsilon"], priv["epochs"]
    C, b = priv["C"], priv["b"]
    m, M = curv["m"], curv["M"]
    plan = _build(lambda: plan_for_epsilon(m, M, C, b, E, alpha, eps))
    lam_ei = _build(lambda: epoch_independent_stepsize(E, m, M))
    L_ei = lipschitz_constant(lam_ei, m, M)
    if "k" in priv:
        if priv["k"] % b:
            raise ConfigError(f"privacy: k={priv['k']} is not a multiple of b={b}")
        ell = priv["k"] // b
    elif math.isfinite(plan.ell_bar):
        ell = math.ceil(plan.ell_bar)
    else:
        ell = None
    alt = {"lam": lam_ei, "lipschitz": L_ei, "ell": ell, "bound_at_sigma_bar": None}
    if ell is not None:
        alt["bound_at_sigma_bar"] = epoch_independent_bound(alpha, C, b, plan.sigma_bar, L_ei, ell)
    if plan.convex_degenerate:
        _warn("m == 0: the pass-length condition cannot be met, ell_bar is inf")
    return {
        "command": "plan",
        "inputs": {"m": m, "M": M, "C": C, "b": b, "epochs": E, "alpha": alpha, "epsilon": eps},
        "lam_bar": plan.lam_bar,
        "sigma_bar": plan.sigma_bar,
        "ell_bar": plan.ell_bar,
        "achieved_bound": plan.achieved_bound,
        "sigma_formula": plan.sigma_formula,
        "inflation": plan.inflation,
        "convex_degenerate": plan.convex_degenerate,
        "epoch_independent": alt,
    }


def _x0(cfg, dim):
    x0 = cfg.dataset.get("x0", 0.0)
    x0 = np.full(dim, x0) if not isinstance(x0, list) else np.asarray(x0, dtype=float)
    if x0.shape != (dim,):
        raise ConfigError(f"dataset.x0 must have {dim} entries")
    return x0


def simulate_pair(cfg: RunConfig, seed: int):
    """Builds the neighboring datasets described by ``cfg`` and runs both."""
    p = config_mod.privacy_params(cfg)
    c = config_mod.curvature_spec(cfg)
    reg = config_mod.regularizer_spec(cfg)
    dim = cfg.dataset.get("dim", 1)
    data_seed = cfg.dataset.get("seed", 0)
    i_star = cfg.dataset.get("i_star", 1)
    ds = _build(lambda: generate_quadratic_dataset(dim, p.k, c.m, c.M, data_seed))
    other = _build(lambda: generate_quadratic_dataset(dim, 1, c.m, c.M, data_seed + 1))
    ds_prime = _build(lambda: make_neighbor(ds, i_star, (other.A[0], other.c[0])))
    x0 = _x0(cfg, dim)
    trajs = _build(lambda: run_pair(ds, ds_prime, reg, p, x0, seed))
    summary = {
        "command": "simulate",
        "noise_seed": seed,
        "i_star": i_star,
        "T": p.T,
        "t_star": first_use_step(i_star, p.b),
        "first_divergence": first_divergence_index(*trajs),
    }
    return summary, trajs


def trajectory_csv(traj) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    dim = traj.iterates.shape[1]
    writer.writerow(["t"] + [f"x{j + 1}" for j in range(dim)])
    for t, row in enumerate(traj.iterates):
        writer.writerow([t] + [format_number(v) for v in row])
    return buf.getvalue()


def cmd_simulate(cfg: RunConfig, seed: int, out_dir=None) -> dict:
    summary, (traj, traj_prime) = simulate_pair(cfg, seed)
    if out_dir is None:
        summary["trajectory"] = traj.iterates
        summary["trajectory_prime"] = traj_prime.iterates
        return summary
    os.makedirs(out_dir, exist_ok=True)
    for name, tr in (("trajectory.csv", traj), ("trajectory_prime.csv", traj_prime)):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(trajectory_csv(tr))
    return summary


def cmd_verify(cfg: RunConfig, seed: int) -> dict:
    o = cfg.oracle
    selected = o.get("suites", list(suites.SUITES))
    kwargs = {
        "lipschitz": {
            "n_datasets": o.get("n_datasets", 20),
            "n_pairs": o.get("n_pairs", 10_000),
            "C": o.get("lipschitz_C", math.inf),
            "scale": o.get("lipschitz_scale", 1.0),
            "seed": seed,
        },
        "displacement": {"seed": seed},
        "prox": {"seed": seed},
        "residual-qp": {},
        "density-bound": {
            "n_configs": o.get("density_configs", 20),
            "n_cells": o.get("grid_cells", 4096),
        },
    }
    results = []
    for name in selected:
        res = suites.run_suite(name, **kwargs[name])
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {name}: max violation {res.max_violation!r} over {res.n_checks} checks", file=sys.stderr)
        results.append(res.to_dict())
    return {"command": "verify", "seed": seed, "passed": all(r["passed"] for r in results), "suites": results}


def _sweep_oracle(cfg, p, c, reg):
    try:
        ds, ds_prime = suites.saturating_pair(p.k, p.C, c.m, c.M, seed=cfg.dataset.get("seed", 0))
        grid = GridSpec(n_cells=cfg.oracle.get("grid_cells", 4096))
        x0 = float(_x0(cfg, 1)[0])
        return oracle_divergence(ds, ds_prime, reg, p, x0, grid)[0]
    except ValueError:
        return math.nan


def sweep_rows(cfg: RunConfig):
    """Header and rows of the sweep table, in lexicographic axis order."""
    axes = cfg.sweep.get("axes")
    if not axes:
        raise ConfigError("missing sweep.axes")
    names = sorted(axes)
    with_oracle = cfg.oracle.get("enabled", False)
    header = names + [r.value for r in GUARANTEE_REGIMES] + ["best_regime", "best_value"]
    if with_oracle:
        header.append("oracle_divergence")
    rows = []
    for point in itertools.product(*(sorted(axes[n]) for n in names)):
        sub = cfg.with_values(dict(zip(names, point)))
        p = config_mod.privacy_params(sub)
        c = config_mod.curvature_spec(sub)
        values = {r.regime: r.value for r in all_bounds(p, c)}
        best = best_bound(p, c)
        row = list(point) + [values[r] for r in GUARANTEE_REGIMES]
        row += ["" if best.regime is None else best.regime.value, best.value]
        if with_oracle:
            row.append(_sweep_oracle(sub, p, c, config_mod.regularizer_spec(sub)))
        rows.append(row)
    return header, rows


def cmd_sweep(cfg: RunConfig) -> str:
    header, rows = sweep_rows(cfg)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else format_number(v) for v in row])
    return buf.getvalue()


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cyclic-rdp",
        description="Last-iterate Renyi-DP accounting for cyclic DP-SGD.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "bound": "evaluate every bound regime",
        "plan": "calibrate stepsize and noise for a target epsilon",
        "simulate": "run DP-SGD on a neighboring pair",
        "verify": "run the oracle property suites",
        "sweep": "tabulate bounds over a parameter grid",
    }
    for name, text in helps.items():
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="JSON config file")
        cmd.add_argument("--out", default=None, help="output path (a directory for simulate)")
        cmd.add_argument("--seed", type=int, default=0, help="noise / sampling seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_mod.load_config(args.config)
        if args.command == "bound":
            _emit(dumps(cmd_bound(cfg)), args.out)
        elif args.command == "plan":
            _emit(dumps(cmd_plan(cfg)), args.out)
        elif args.command == "simulate":
            summary = cmd_simulate(cfg, args.seed, args.out)
            _emit(dumps(summary), None if args.out is None else os.path.join(args.out, "summary.json"))
        elif args.command == "verify":
            report = cmd_verify(cfg, args.seed)
            _emit(dumps(report), args.out)
            return EXIT_OK if report["passed"] else EXIT_VERIFY_FAILED
        else:
            _emit(cmd_sweep(cfg), args.out)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
