"""Command-line entry point: ``sigma-collapse <subcommand> ...``.

Exit status is 0 on success, 1 on a domain error (message on stderr) and 2
on a usage error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import records
from .grid import RadialGrid, parse_grid_spec

log = logging.getLogger("sigma_collapse")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------
SIM_KEYS = {
    "k": int, "epsilon": float, "c0": float, "grid.N": int, "grid.rc": float, "grid.hin": float,
    "grid.Rmax": float, "cfl": float, "T_end": float, "snapshot_stride": int, "regrid.depth": int,
    "out_dir": str,
    # optional extras
    "diag_dt": float, "grid.spec": str, "gradient_cap_cells": float, "inline_lambda": int,
    "regrid.threshold": float, "perturbation_fraction": float,
}
SIM_DEFAULTS = {
    "k": 4, "epsilon": 0.1, "c0": 0.0, "grid.N": 8001, "grid.rc": 2.0, "grid.hin": 0.001,
    "cfl": 0.5, "snapshot_stride": 10, "regrid.depth": 0, "diag_dt": 0.1,
    "gradient_cap_cells": 10.0, "inline_lambda": 0, "regrid.threshold": 0.1,
    "perturbation_fraction": 0.5,
}


def typed_config(raw: dict) -> dict:
    cfg = dict(SIM_DEFAULTS)
    for key, val in raw.items():
        if key not in SIM_KEYS:
            raise UsageError(f"unknown config key {key!r}")
        try:
            cfg[key] = SIM_KEYS[key](val) if SIM_KEYS[key] is not int else int(float(val))
        except ValueError:
            raise UsageError(f"config key {key!r}: cannot parse {val!r}") from None
    for key in ("T_end", "out_dir"):
        if key not in cfg:
            raise UsageError(f"config is missing required key {key!r}")
    cfg.setdefault("grid.Rmax", cfg["T_end"] + 20.0)
    return cfg


def grid_from_config(cfg: dict) -> RadialGrid:
    if "grid.spec" in cfg:
        return parse_grid_spec(cfg["grid.spec"])
    return RadialGrid.two_zone(cfg["grid.N"], cfg["grid.hin"], cfg["grid.rc"], cfg["grid.Rmax"])


def simulate(cfg: dict, out_dir: Path | None = None) -> dict:
    """Run one simulation from a typed config; returns a summary dict."""
    from .evolve import DIAG_COLUMNS, EvolveConfig, run
    from .functionals import energy, make_initial_data, orthogonal_perturbation

    t_wall = time.perf_counter()
    out = Path(out_dir or cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    grid = grid_from_config(cfg)
    k, eps, c0 = cfg["k"], cfg["epsilon"], cfg["c0"]
    u0 = orthogonal_perturbation(k, eps, c0, grid, cfg["perturbation_fraction"])
    state = make_initial_data(k, eps, u0, 0.0, grid, c0=c0 if c0 > 0 else None)
    ecfg = EvolveConfig(T_end=cfg["T_end"], cfl=cfg["cfl"], snapshot_stride=cfg["snapshot_stride"],
                        diag_dt=cfg["diag_dt"], regrid_depth=cfg["regrid.depth"],
                        regrid_threshold=cfg["regrid.threshold"],
                        gradient_cap_cells=cfg["gradient_cap_cells"],
                        inline_lambda=bool(cfg["inline_lambda"]))
    writer = records.SnapshotWriter(out)
    res = run(state, ecfg, on_snapshot=writer, keep_snapshots=False)
    files = list(writer.files)
    files.append(records.write_csv(out / "diagnostics.csv", DIAG_COLUMNS, res.diagnostics))
    e = np.array([r["energy"] for r in res.diagnostics])
    drift = float(np.max(np.abs(e - e[0])) / abs(e[0])) if e[0] != 0 else float(np.max(np.abs(e)))
    final_lam = None
    try:
        from .modulation import estimate_lambda, extract_lambda

        guess = res.diagnostics[-1]["lambda_raw"]
        final_lam = (extract_lambda(res.final, guess) if guess else estimate_lambda(res.final)).lam
    except Exception as exc:  # recorded, not fatal
        log.warning("final lambda extraction failed: %s", exc)
    summary = {"status": res.status, "message": res.message, "steps": res.steps,
               "energy_drift": drift, "final_lambda": final_lam, "final_t": res.final.t,
               "regrids": res.regrids}
    records.write_manifest(out, files, cfg, res.status,
                           extra={"grid": grid.describe(), "summary": summary,
                                  "initial_energy": energy(state, check=False)},
                           wall_time=time.perf_counter() - t_wall)
    return summary


def cmd_simulate(args) -> int:
    if not args.config or not Path(args.config).is_file():
        raise UsageError(f"config file not found: {args.config}")
    cfg = typed_config(records.parse_config(args.config))
    if args.out_dir:
        cfg["out_dir"] = args.out_dir
    summary = simulate(cfg)
    print(json.dumps({k: summary[k] for k in ("status", "final_t", "final_lambda", "energy_drift")}))
    return 0


# ---------------------------------------------------------------------------
# modulate
# ---------------------------------------------------------------------------
def cmd_modulate(args) -> int:
    from .modulation import MorawetzConfig, modulate_run, morawetz_energy, morawetz_ratio

    run_dir = Path(args.run)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = {}
    if (run_dir / "manifest.json").exists():
        cfg = json.loads((run_dir / "manifest.json").read_text()).get("config", {})
    trace, snaps = modulate_run(records.read_snapshots(run_dir), out_csv=out / "modulation.csv")
    files = [out / "modulation.csv"]
    ok = [i for i, r in enumerate(trace.rows) if r["status"] == "ok"]
    mcfg = MorawetzConfig(delta=args.delta, t0=args.morawetz[0] if args.morawetz else None,
                          t1=args.morawetz[1] if args.morawetz else None)
    good_snaps = [snaps[i] for i in ok]
    lams = [trace.rows[i]["lambda"] for i in ok]
    lds = [trace.rows[i]["lambda_dot"] for i in ok]
    value, info = morawetz_energy(good_snaps, lams, lds, mcfg, details=True)
    eps = float(cfg.get("epsilon", math.nan))
    c0 = float(cfg.get("c0", 0.0))
    tw = np.array([s.t for s in good_snaps])
    sel = (tw >= info["t0"]) & (tw <= info["t1"])
    ratio = morawetz_ratio(value, eps, c0, np.array(lams)[sel], np.array(lds)[sel])
    files.append(records.write_json(out / "morawetz.json", {
        "E_delta": value, "delta": args.delta, "ratio": ratio, "epsilon": eps, "c0": c0, **info}))
    records.write_manifest(out, files, {"run": str(run_dir), "delta": args.delta,
                                        "morawetz": args.morawetz}, "completed")
    return 0


# ---------------------------------------------------------------------------
# constants / verify-operators / ode
# ---------------------------------------------------------------------------
def _emit_json(obj, out) -> None:
    if out:
        records.write_json(out, obj)
    else:
        json.dump(records._jsonable(obj), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")


def cmd_constants(args) -> int:
    from .functionals import QuadratureScheme, compute_constants

    scheme = QuadratureScheme(rel_tol=args.tol) if args.tol else QuadratureScheme()
    c = compute_constants(args.k, scheme)
    _emit_json(c.to_dict(), args.out)
    return 0


def cmd_verify_operators(args) -> int:
    from .operators import (convergence_study, identity_residuals, self_adjointness_defect,
                            verify_potential_properties)

    grid = parse_grid_spec(args.grid)
    report = {
        "k": args.k,
        "lambda": args.lam,
        "grid": grid.describe(),
        "residuals": identity_residuals(args.k, args.lam, grid),
        "potential": verify_potential_properties(args.k, args.lam, grid),
        "self_adjointness_defect": self_adjointness_defect(args.k, args.lam, grid),
    }
    if args.refine:
        report["convergence"] = convergence_study(args.k, args.lam, args.refine)
    _emit_json(report, args.out)
    return 0


def cmd_ode(args) -> int:
    from .odelab import OdeModel, fit_rate, solve_ode

    model = OdeModel(args.variant, args.C0, args.eps0, args.kappa or 0.0)
    sol = solve_ode(model, T_end=args.T_end, rtol=args.rtol, dt_out=args.dt_out)
    records.write_csv(args.out, ["t", "lambda", "lambda_dot", "memory_integral"], sol.rows())
    info = {"T_star": sol.T_star, "status": sol.status}
    if args.fit:
        rows = records.read_csv(args.fit)
        t = np.array([r["t"] for r in rows], dtype=float)
        lam = np.array([r["lambda"] for r in rows], dtype=float)
        fits = {}
        for name in ("pure-self-similar", "log-modified"):
            try:
                f = fit_rate(t, lam, name)
            except ValueError as exc:
                fits[name] = {"error": f"{type(exc).__name__}: {exc}"}
                continue
            fits[name] = {"T_star": f.T_star, "residual": f.residual, "amplitude": f.amplitude,
                          "residual_per_decade": f.residual_per_decade}
        info["fits"] = fits
        records.write_json(str(args.out) + ".fit.json", fits)
    print(json.dumps(records._jsonable(info)))
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------
SWEEP_AXES = ("k", "epsilon", "grid.N")


def _sweep_job(job):
    cfg, out = job
    try:
        s = simulate(cfg, Path(out))
        return {"status": s["status"], "final_lambda": s["final_lambda"],
                "energy_drift": s["energy_drift"], "message": s["message"]}
    except Exception as exc:
        return {"status": "failed", "final_lambda": None, "energy_drift": None,
                "message": f"{type(exc).__name__}: {exc}"}


def sweep_jobs(raw: dict) -> list:
    lists = {a: [v.strip() for v in raw[a].split(",") if v.strip()] for a in SWEEP_AXES if a in raw}
    base = {k: v for k, v in raw.items() if k not in lists}
    base_typed = typed_config({**base, **{a: vals[0] for a, vals in lists.items()}})
    root = Path(base_typed["out_dir"])
    jobs = []
    axes = list(lists)
    for i, combo in enumerate(itertools.product(*[lists[a] for a in axes])):
        cfg = typed_config({**base, **dict(zip(axes, combo))})
        tag = "_".join(f"{a.replace('grid.', '')}{v}" for a, v in zip(axes, combo))
        out = root / (f"run_{i:03d}" + (f"_{tag}" if tag else ""))
        cfg["out_dir"] = str(out)
        jobs.append((cfg, str(out)))
    return jobs


def cmd_sweep(args) -> int:
    if not args.config or not Path(args.config).is_file():
        raise UsageError(f"config file not found: {args.config}")
    raw = records.parse_config(args.config)
    if args.out_dir:
        raw["out_dir"] = args.out_dir
    jobs = sweep_jobs(raw)
    root = Path(typed_config({k: v.split(",")[0] for k, v in raw.items()})["out_dir"])
    root.mkdir(parents=True, exist_ok=True)
    cap = os.environ.get("SIGMA_COLLAPSE_THREADS")
    workers = max(1, min(len(jobs), int(cap) if cap else (os.cpu_count() or 1)))
    if workers == 1:
        results = [_sweep_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    rows = []
    for (cfg, out), res in zip(jobs, results):
        rows.append({"run": Path(out).name, "k": cfg["k"], "epsilon": cfg["epsilon"],
                     "grid.N": cfg["grid.N"], **res})
    header = ["run", "k", "epsilon", "grid.N", "status", "final_lambda", "energy_drift", "message"]
    records.write_csv(root / "sweep.csv", header, rows)
    return 0 if all(r["status"] != "failed" for r in rows) else 1


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------
class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sigma-collapse", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="evolve soliton initial data")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir")
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("modulate", help="extract lambda(t) and diagnostics from a run")
    s.add_argument("--run", required=True)
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--morawetz", type=float, nargs=2, metavar=("T0", "T1"))
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_modulate)

    s = sub.add_parser("constants", help="soliton constants and the C* sum")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--tol", type=float)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_constants)

    s = sub.add_parser("verify-operators", help="operator identities and potential certificates")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--grid", default="uniform:N=4000,Rmax=20")
    s.add_argument("--refine", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_verify_operators)

    s = sub.add_parser("ode", help="integrate the reduced lambda dynamics")
    s.add_argument("--variant", choices=("geodesic", "riccati", "refined"), required=True)
    s.add_argument("--C0", type=float, required=True)
    s.add_argument("--eps0", type=float, required=True)
    s.add_argument("--kappa", type=float)
    s.add_argument("--T-end", dest="T_end", type=float)
    s.add_argument("--rtol", type=float, default=1e-10)
    s.add_argument("--dt-out", dest="dt_out", type=float)
    s.add_argument("--fit")
    s.add_argument("--out", default="ode.csv")
    s.set_defaults(fn=cmd_ode)

    s = sub.add_parser("sweep", help="Cartesian product of simulate runs")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir")
    s.set_defaults(fn=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "fn", None):
            parser.print_help(sys.stderr)
            return 2
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "ode" and args.dt_out is None and args.variant != "refined":
            # a step that hits round fractions of C0/eps0 keeps rows like t = T/2 exact
            args.dt_out = args.C0 / args.eps0 / 100.0
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (ValueError, ArithmeticError, RuntimeError, LookupError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
