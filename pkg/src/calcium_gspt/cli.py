"""Command-line front end: parameter ingestion, analysis drivers and
deterministic CSV/JSON export.

All files are written atomically (temp file + rename) and numbers are
serialized with 17 significant digits so that identical runs produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import orbits, r1, r2, scaling
from .integrate import (IntegrationError, IntegratorConfig, NoAttractorError,
                        SectionTimeoutError, find_periodic_attractor,
                        integrate, trajectory_to_rows)
from .model import make_rhs
from .params import (ParameterError, Parameters, apply_overrides,
                     load_parameters)

_ANALYSIS_ERRORS = (r1.LandmarkMissingError, r2.FoldedSingularityNotFound,
                    NoAttractorError, IntegrationError, SectionTimeoutError)


# ---------------------------------------------------------------------------
# Serialization helpers


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _jsonable(getattr(obj, k))
                for k in obj.__dataclass_fields__}
    return obj


def write_atomic(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file in the same directory and
    an atomic rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(x if isinstance(x, str) else _fmt(x)
                              for x in row))
    write_atomic(path, "\n".join(lines) + "\n")


def write_json(path: str, obj) -> None:
    write_atomic(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True)
                 + "\n")


# ---------------------------------------------------------------------------
# Argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calcium-gspt",
        description="Three-variable open-cell calcium model: simulation and "
                    "slow-fast (singular-perturbation) analysis pipeline.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", metavar="FILE",
                        help="JSON file of model parameters (flat key/value)")
    common.add_argument("--set", metavar="KEY=VALUE", action="append",
                        default=[], dest="overrides",
                        help="override a parameter (repeatable)")
    common.add_argument("--out", metavar="DIR", default="out",
                        help="output directory (default: ./out)")
    common.add_argument("--rtol", type=float, default=None)
    common.add_argument("--atol", type=float, default=None)
    common.add_argument("--p", type=float, default=None,
                        help="agonist-level bifurcation parameter")
    common.add_argument("--chi", type=float, default=0.05,
                        help="section level for transition maps")
    common.add_argument("--eps", type=float, default=None,
                        help="small parameter for the scaled formulations")
    common.add_argument("--nu", type=float, default=None,
                        help="uptake scale for the plateau-regime analysis")
    common.add_argument("--seed", type=int, default=0,
                        help="seed for grid jitter (deterministic outputs)")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common],
                       help="integrate the full model, export the trajectory")
    p.add_argument("--t-max", type=float, default=1e6)
    sub.add_parser("scale-report", parents=[common],
                   help="flux scales, switch scores and the scaling relation")
    sub.add_parser("analyze-r1", parents=[common],
                   help="plateau-regime landmarks and slow-manifold data")
    sub.add_parser("analyze-r2", parents=[common],
                   help="small-c regime fold curve and reduced flow")
    p = sub.add_parser("maps", parents=[common],
                       help="transition maps through both regimes")
    p.add_argument("--n-entries", type=int, default=5)
    p = sub.add_parser("bifurcate", parents=[common],
                       help="equilibrium branch and Hopf points in p")
    p.add_argument("--p-lo", type=float, default=0.001)
    p.add_argument("--p-hi", type=float, default=0.2)
    p.add_argument("--n-points", type=int, default=200)
    p = sub.add_parser("scan", parents=[common],
                       help="periodic-attractor amplitude scan in p")
    p.add_argument("--p-lo", type=float, default=0.03)
    p.add_argument("--p-hi", type=float, default=0.1001)
    p.add_argument("--n-points", type=int, default=12)
    sub.add_parser("export-figs", parents=[common],
                   help="bundle the figure-ready CSVs")
    return parser


def _load(args) -> Parameters:
    if args.params is not None:
        if not os.path.exists(args.params):
            raise ParameterError(f"parameter file not found: {args.params}")
        pm = load_parameters(args.params)
    else:
        pm = Parameters()
    if args.overrides:
        pm = apply_overrides(pm, args.overrides)
    if args.p is not None:
        pm = pm.replace(p=args.p)
    return pm


def _config(args, **defaults) -> IntegratorConfig:
    cfg = IntegratorConfig(**defaults) if defaults else IntegratorConfig()
    kw = {}
    if args.rtol is not None:
        kw["rtol"] = args.rtol
    if args.atol is not None:
        kw["atol"] = args.atol
    return cfg.replace(**kw) if kw else cfg


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_simulate(args, pm) -> None:
    dp = pm.nondimensionalize()
    cfg = _config(args, t_max=args.t_max)
    traj = integrate(make_rhs(dp, "dimensionless"), (0.01, 0.3, 0.9), cfg)
    write_csv(os.path.join(args.out, "trajectory.csv"),
              ["t", "c", "c_t", "h"], trajectory_to_rows(traj))
    write_json(os.path.join(args.out, "simulate_summary.json"),
               {"p": dp.p, "t_max": cfg.t_max, "rtol": cfg.rtol,
                "atol": cfg.atol, "n_points": len(traj.times),
                "max": traj.states.max(axis=1), "min": traj.states.min(axis=1)})


def _cmd_scale_report(args, pm) -> None:
    dp = pm.nondimensionalize()
    report = scaling.scaling_relation(dp)
    out = report.as_dict()
    out["serca_minus_gradient_max"] = scaling.serca_minus_gradient_max(dp)
    write_json(os.path.join(args.out, "scaling_report.json"), out)


def _cmd_analyze_r1(args, pm) -> None:
    dp = pm.nondimensionalize()
    lm = r1.locate_landmarks(dp, args.nu)
    write_json(os.path.join(args.out, "r1_landmarks.json"), lm)
    cs = np.linspace(1e-3, 0.6, 400)
    rows = []
    for c in cs:
        jac = r1.layer_jacobian_s1(c, dp, args.nu)
        rows.append((c, r1.psi(c, dp, args.nu),
                     dp.K_h ** 4 / (c ** 4 + dp.K_h ** 4),
                     jac["sigma"], jac["delta"],
                     r1.classify_branch(c, dp, args.nu)))
    write_csv(os.path.join(args.out, "s1_curve.csv"),
              ["c", "psi", "h_inf", "sigma", "delta", "branch"], rows)


def _cmd_analyze_r2(args, pm) -> None:
    dp = pm.nondimensionalize()
    nt = r2.default_nu_tilde(dp)
    cts = np.linspace(0.05, 2.0, 80)
    pts = r2.fold_curve(cts, dp, nt)
    write_csv(os.path.join(args.out, "fold_curve.csv"),
              ["c_t", "C_fold", "h_fold", "transversality",
               "nondegeneracy", "dfdct"],
              [(q.c_t, q.C_fold, q.h_fold, q.transversality,
                q.nondegeneracy, q.dfdct) for q in pts])
    try:
        root = r2.folded_singularity_root(dp, nt)
        singularity = {"found": True, "c_t": root}
    except r2.FoldedSingularityNotFound as exc:
        singularity = {"found": False, "note": str(exc)}
    flow_rows = []
    for ct0 in np.linspace(0.3, 1.2, 5):
        C0 = 0.85 * float(r2.fold_C(ct0, dp, nt))
        res = r2.reduced_flow_r2((C0, ct0), dp, nt)
        for k in range(res["polyline"].shape[1]):
            flow_rows.append((ct0, res["times"][k],
                              res["polyline"][0, k], res["polyline"][1, k]))
    write_csv(os.path.join(args.out, "reduced_flow.csv"),
              ["start_c_t", "t", "C", "c_t"], flow_rows)
    write_json(os.path.join(args.out, "r2_report.json"),
               {"nu_tilde": nt, "nondegeneracy": 4.0 * nt / dp.K_s ** 2,
                "folded_singularity": singularity})


def _cmd_maps(args, pm) -> None:
    dp = pm.nondimensionalize()
    rng = np.random.default_rng(args.seed)
    lm = r1.locate_landmarks(dp, args.nu)
    grid = np.linspace(lm.ct_hom + 0.04, 0.9, args.n_entries)
    grid = grid + rng.uniform(-0.005, 0.005, size=grid.shape)
    res1 = orbits.transition_map_r1(grid, dp, chi=args.chi, nu=args.nu,
                                    landmarks=lm)
    write_csv(os.path.join(args.out, "map_r1.csv"),
              ["ct_in", "h_in", "c_out", "ct_out", "h_out", "flight_time"],
              [(e[1], e[2], x[0], x[1], x[2], t) for e, x, t in res1.images])
    scaling_res = orbits.fold_passage_scaling(dp)
    rows = []
    for eps, m in scaling_res["maps"].items():
        for e, x, t in m.images:
            rows.append((eps, e[1], e[2], x[0], x[1], x[2], t))
    write_csv(os.path.join(args.out, "map_r2.csv"),
              ["varepsilon", "ct_in", "h_in", "C_out", "ct_out", "h_out",
               "flight_time"], rows)
    write_json(os.path.join(args.out, "maps_summary.json"),
               {"r1_spread": res1.spread, "r1_target_ct": lm.ct_star,
                "r1_plateau_fractions":
                    res1.concentration_curve["plateau_fractions"],
                "r1_rejected": len(res1.out_of_contract),
                "r2_varepsilons": scaling_res["varepsilons"],
                "r2_spreads": scaling_res["spreads"],
                "r2_slope": scaling_res["slope"]})


def _cmd_bifurcate(args, pm) -> None:
    dp = pm.nondimensionalize()
    diag = orbits.equilibrium_branch(dp, getattr(args, "p_lo", 0.001),
                                     getattr(args, "p_hi", 0.2),
                                     getattr(args, "n_points", 200))
    rows = []
    for i in range(len(diag.branch_p)):
        ev = diag.branch_eigenvalues[:, i]
        rows.append((diag.branch_p[i], *diag.branch_states[:, i],
                     "1" if diag.branch_stable[i] else "0",
                     float(np.max(ev.real))))
    write_csv(os.path.join(args.out, "branch.csv"),
              ["p", "c", "c_t", "h", "stable", "max_re_eig"], rows)
    write_json(os.path.join(args.out, "bifurcation.json"),
               {"hopf_points": diag.hopf_points,
                "hopf_brackets": diag.hopf_brackets,
                "gaps": diag.gaps, "n_points": len(diag.branch_p)})


def _cmd_scan(args, pm) -> None:
    dp = pm.nondimensionalize()
    ps = np.linspace(args.p_lo, args.p_hi, args.n_points)
    results = orbits.amplitude_scan(ps, dp)
    write_csv(os.path.join(args.out, "amplitude_scan.csv"),
              ["p", "max_c", "min_c", "period", "spike_class"],
              [(r["p"], r["max_c"], r["min_c"], r["period"],
                r["spike_class"]) for r in results])
    write_json(os.path.join(args.out, "scan_summary.json"), {"points": results})


def _cmd_export_figs(args, pm) -> None:
    dp = pm.nondimensionalize()
    cfg = _config(args, rtol=1e-10, atol=1e-13, t_max=1.5e6)
    for label, p in (("narrow", 0.02), ("broad", 0.09)):
        orbit = find_periodic_attractor(dp.replace(p=p), config=cfg)
        write_csv(os.path.join(args.out, f"timeseries_{label}.csv"),
                  ["t", "c", "c_t", "h"],
                  ((orbit.times[k], *orbit.states[:, k])
                   for k in range(orbit.states.shape[1])))
    _cmd_analyze_r1(args, pm)
    _cmd_analyze_r2(args, pm)
    _cmd_bifurcate(args, pm)


_COMMANDS = {
    "simulate": _cmd_simulate,
    "scale-report": _cmd_scale_report,
    "analyze-r1": _cmd_analyze_r1,
    "analyze-r2": _cmd_analyze_r2,
    "maps": _cmd_maps,
    "bifurcate": _cmd_bifurcate,
    "scan": _cmd_scan,
    "export-figs": _cmd_export_figs,
}


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        pm = _load(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        _COMMANDS[args.command](args, pm)
    except _ANALYSIS_ERRORS as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return 1
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
