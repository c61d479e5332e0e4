"""Shared run recipes for the acceptance tests and the baseline generator."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from sigma_collapse import records
from sigma_collapse.cli import simulate, typed_config
from sigma_collapse.functionals import compute_constants
from sigma_collapse.modulation import MorawetzConfig, modulate_run, morawetz_energy, morawetz_ratio
from sigma_collapse.operators import bump_family, coercivity_grid, coercivity_ratio

DATA = Path(__file__).parent / "data"
BASELINES = DATA / "baselines.json"

COLLAPSE_CONFIG = {
    "k": "4", "epsilon": "0.1", "c0": "0.1",
    "grid.N": "4001", "grid.hin": "0.002", "grid.rc": "4", "grid.Rmax": "280",
    "cfl": "0.5", "T_end": "210", "snapshot_stride": "10", "diag_dt": "0.1",
    "regrid.depth": "4",
}

COERCIVITY_LAMBDAS = (1.0, 10.0)
COERCIVITY_VARIANTS = ("c_app1", "c_app2", "c_app3")


def coercivity_minima(k: int = 4) -> dict:
    g = coercivity_grid()
    out = {}
    for lam in COERCIVITY_LAMBDAS:
        fam = bump_family(g, k, lam)
        out[f"lam={lam:g}"] = {v: coercivity_ratio(k, lam, fam, v, g) for v in COERCIVITY_VARIANTS}
    return out


def run_collapse(out_dir) -> dict:
    """Simulate, reload the snapshots from disk and modulate; returns everything the checks need."""
    out_dir = Path(out_dir)
    cfg = typed_config({**COLLAPSE_CONFIG, "out_dir": str(out_dir / "run")})
    summary = simulate(cfg)
    trace, snaps = modulate_run(records.read_snapshots(out_dir / "run"),
                                out_csv=out_dir / "modulation.csv")
    diagnostics = records.read_csv(out_dir / "run" / "diagnostics.csv")
    return {"cfg": cfg, "summary": summary, "trace": trace, "snaps": snaps,
            "diagnostics": diagnostics}


def collapse_metrics(res: dict) -> dict:
    cfg, summary, trace, snaps = res["cfg"], res["summary"], res["trace"], res["snaps"]
    eps, c0, k = cfg["epsilon"], cfg["c0"], cfg["k"]
    C0 = compute_constants(k).C0
    regrids = summary["regrids"]
    t_resolved = regrids[0]["t"] if regrids else math.inf
    ok = [i for i, r in enumerate(trace.rows) if r["status"] == "ok"]
    t = np.array([trace.rows[i]["t"] for i in ok])
    lam = np.array([trace.rows[i]["lambda"] for i in ok])
    ld = np.array([trace.rows[i]["lambda_dot"] for i in ok])
    E0 = np.array([trace.rows[i]["E0"] for i in ok])
    e1 = np.array([trace.rows[i]["eps1"] for i in ok])
    res_mask = t <= t_resolved
    after = t >= 5.0
    mor_snaps = [snaps[i] for i, tt in zip(ok, t) if tt <= t_resolved]
    value = morawetz_energy(mor_snaps, lam[res_mask], ld[res_mask], MorawetzConfig(0.1))
    return {
        "status": summary["status"],
        "t_resolved": float(t_resolved),
        "lam_dot0_ratio": float(ld[0] * math.pi * C0 / eps),
        "increasing_after_transient": bool(np.all(np.diff(lam[after]) > 0)),
        "max_lam_dot_over_lam2": float(np.max(ld / lam**2)),
        "max_lambda": float(lam.max()),
        "max_lambda_resolved": float(lam[res_mask].max()),
        "E0_max_resolved": float(E0[res_mask].max()),
        "eps1_max_resolved": float(np.abs(e1[res_mask]).max()),
        "morawetz": value,
        "morawetz_ratio": float(morawetz_ratio(value, eps, c0, lam[res_mask], ld[res_mask])),
    }


def load_baselines() -> dict:
    return json.loads(BASELINES.read_text())
