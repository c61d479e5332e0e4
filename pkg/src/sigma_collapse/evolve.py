"""Leapfrog evolution of the reduced equation

    phi_tt = phi_rr + phi_r / r - k^2 sin(2 phi) / (2 r^2)

on a cell-centred radial grid with a frozen outer node.  The spatial operator
is the Euler-Lagrange operator of the discrete energy, so the kick-drift-kick
scheme conserves that energy to O(dt^2) with no secular drift.

The hot loop lives in :mod:`sigma_collapse.kernels`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .functionals import FieldState, bogomolny_defect, energy
from .grid import RadialGrid

__all__ = [
    "FieldState",
    "EvolveConfig",
    "RunResult",
    "CflViolation",
    "NaNDetected",
    "PreconditionError",
    "rhs",
    "max_stable_dt",
    "step",
    "run",
    "regrid",
    "interpolate4",
    "diagnostics_row",
    "DIAG_COLUMNS",
]

log = logging.getLogger(__name__)

DIAG_COLUMNS = ("t", "energy", "defect", "sup_dphi", "sup_J", "lambda_raw")


class CflViolation(ValueError):
    pass


class NaNDetected(FloatingPointError):
    def __init__(self, t: float, node: int, r: float):
        super().__init__(f"non-finite field at t={t:.6g}, node {node} (r={r:.6g})")
        self.t, self.node, self.r = t, node, r


class PreconditionError(ValueError):
    pass


@dataclass
class EvolveConfig:
    """Run parameters.

    ``cfl`` is relative to the leapfrog stability limit
    ``min(dr) / sqrt(1 + k^2)``; the potential ``k^2 / r^2`` on the first
    cell tightens the bare ``min(dr)`` bound by that factor.
    """

    T_end: float
    cfl: float = 0.5
    snapshot_stride: int = 10
    diag_dt: float = 0.1
    regrid_policy: str = "threshold"
    regrid_depth: int = 0
    regrid_threshold: float = 0.1
    gradient_cap_cells: float = 10.0
    support_radius: float = 0.0
    boundary_margin: float = 0.0
    inline_lambda: bool = False

    def __post_init__(self) -> None:
        if not (0.0 < self.cfl <= 1.0):
            raise ValueError("cfl must lie in (0, 1]")
        if self.T_end < 0 or self.diag_dt <= 0 or self.snapshot_stride < 1:
            raise ValueError("T_end >= 0, diag_dt > 0 and snapshot_stride >= 1 are required")
        if self.regrid_policy not in ("none", "threshold"):
            raise ValueError(f"unknown regrid policy {self.regrid_policy!r}")

    def gradient_cap(self, grid: RadialGrid, k: int) -> float:
        """Largest resolvable ``sup |d_r phi|``: ``gradient_cap_cells`` cells across ``1/lam``.

        A soliton at scale ``lam`` has ``sup |d_r phi| ~ k lam`` (attained near ``r = 1/lam``).
        """
        return k / (self.gradient_cap_cells * grid.h_in)


@dataclass
class RunResult:
    status: str
    message: str
    final: FieldState
    diagnostics: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    regrids: list = field(default_factory=list)
    steps: int = 0


_COEF_CACHE: dict = {}


def _coef(grid: RadialGrid, k: int) -> kernels.GridCoefficients:
    key = (id(grid), k)
    hit = _COEF_CACHE.get(key)
    if hit is None or hit[0] is not grid:
        if len(_COEF_CACHE) > 8:
            _COEF_CACHE.clear()
        hit = (grid, kernels.GridCoefficients(grid, k))
        _COEF_CACHE[key] = hit
    return hit[1]


def rhs(state: FieldState) -> np.ndarray:
    """``(d_r^2 + r^-1 d_r) phi - k^2 sin(2 phi) / (2 r^2)``; zero on the frozen outer node."""
    return kernels.accel(_coef(state.grid, state.k), state.phi)


def max_stable_dt(grid: RadialGrid, k: int) -> float:
    return grid.min_spacing / math.sqrt(1.0 + k * k)


def _check_finite(state: FieldState) -> None:
    bad = ~np.isfinite(state.phi) | ~np.isfinite(state.pi)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NaNDetected(state.t, i, float(state.grid.r[i]))


def step(state: FieldState, dt: float, nsteps: int = 1, cfl: float = 1.0) -> FieldState:
    """``nsteps`` kick-drift-kick steps; returns a new state.  Negative ``dt`` runs backwards."""
    limit = cfl * max_stable_dt(state.grid, state.k)
    if abs(dt) > limit * (1.0 + 1e-12):
        raise CflViolation(f"|dt| = {abs(dt):.4g} exceeds the stable limit {limit:.4g}")
    out = state.copy()
    kernels.leapfrog(_coef(out.grid, out.k), out.phi, out.pi, dt, nsteps)
    out.t = state.t + nsteps * dt
    _check_finite(out)
    return out


# ---------------------------------------------------------------------------
# regridding
# ---------------------------------------------------------------------------
def interpolate4(r_old: np.ndarray, f_old: np.ndarray, r_new: np.ndarray, odd: bool = True) -> np.ndarray:
    """Cubic Lagrange interpolation on the 4 nearest nodes.

    With ``odd=True`` the data are reflected through ``r = 0`` so points
    inside the first cell see a centred stencil.
    """
    if odd:
        x = np.concatenate([-r_old[1::-1], r_old])
        y = np.concatenate([-f_old[1::-1], f_old])
    else:
        x, y = np.asarray(r_old), np.asarray(f_old)
    j = np.searchsorted(x, r_new) - 2
    j = np.clip(j, 0, x.size - 4)
    idx = j[:, None] + np.arange(4)[None, :]
    xs, ys = x[idx], y[idx]
    out = np.zeros(r_new.size)
    for a in range(4):
        basis = np.ones(r_new.size)
        for b in range(4):
            if a != b:
                basis *= (r_new - xs[:, b]) / (xs[:, a] - xs[:, b])
        out += basis * ys[:, a]
    return out


def regrid(state: FieldState, grid: RadialGrid | None = None) -> FieldState:
    new = grid or state.grid.refined_inner()
    phi = interpolate4(state.grid.r, state.phi, new.r)
    pi = interpolate4(state.grid.r, state.pi, new.r)
    phi[-1] = state.phi[-1]
    pi[-1] = 0.0
    return FieldState(state.t, phi, pi, new, state.k)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------
def diagnostics_row(state: FieldState, lam: float | None = None) -> dict:
    g = state.grid
    sup_dphi = float(np.max(np.abs(state.face_gradient())))
    sup_J = float(np.max(state.k * np.abs(np.sin(state.phi)) / g.r))
    return {
        "t": state.t,
        "energy": energy(state, check=False),
        "defect": bogomolny_defect(state),
        "sup_dphi": sup_dphi,
        "sup_J": sup_J,
        "lambda_raw": lam,
    }


def run(initial: FieldState, cfg: EvolveConfig,
        on_snapshot: Callable[[FieldState], None] | None = None,
        on_row: Callable[[dict], None] | None = None,
        keep_snapshots: bool = True) -> RunResult:
    """Evolve to ``cfg.T_end`` or until the grid can no longer resolve the solution.

    Diagnostics are taken every ``cfg.diag_dt`` and a snapshot every
    ``cfg.snapshot_stride`` diagnostic rows (including ``t = 0``).  The
    returned status is ``"completed"`` or ``"resolution-exhausted"``.
    """
    g0 = initial.grid
    need = cfg.T_end + cfg.support_radius + cfg.boundary_margin
    if g0.r_max < need:
        raise PreconditionError(
            f"R_max = {g0.r_max:g} < T_end + support + margin = {need:g}: the outer boundary "
            "would enter the causal past of the diagnostics")
    e0 = energy(initial, check=False)
    if not math.isfinite(e0):
        raise PreconditionError("initial energy is not finite")
    _check_finite(initial)

    lam_state = {"lam": 1.0}
    extract = None
    if cfg.inline_lambda:
        from .modulation import extract_lambda

        def extract(st):
            res = extract_lambda(st, lam_state["lam"])
            lam_state["lam"] = res.lam
            return res.lam

    result = RunResult("completed", "", initial)
    state = initial.copy()
    t0 = state.t
    depth_left = cfg.regrid_depth if cfg.regrid_policy == "threshold" else 0

    def record(st: FieldState, snap: bool) -> dict:
        row = diagnostics_row(st, extract(st) if extract else None)
        result.diagnostics.append(row)
        if on_row:
            on_row(row)
        if snap:
            if keep_snapshots:
                result.snapshots.append(st.copy())
            if on_snapshot:
                on_snapshot(st)
        return row

    row = record(state, True)
    n_rows = int(math.ceil(cfg.T_end / cfg.diag_dt - 1e-9))
    for b in range(1, n_rows + 1):
        t_target = t0 + min(b * cfg.diag_dt, cfg.T_end)
        span = t_target - state.t
        dt_max = cfg.cfl * max_stable_dt(state.grid, state.k)
        nsteps = max(1, int(math.ceil(span / dt_max - 1e-12)))
        dt = span / nsteps
        kernels.leapfrog(_coef(state.grid, state.k), state.phi, state.pi, dt, nsteps)
        result.steps += nsteps
        state.t = t_target
        _check_finite(state)

        sup = float(np.max(np.abs(state.face_gradient())))
        while (cfg.regrid_policy == "threshold" and depth_left > 0
               and sup * state.grid.h_in > cfg.regrid_threshold):
            old = state.grid
            state = regrid(state)
            depth_left -= 1
            result.regrids.append({"t": state.t, "h_in_old": old.h_in, "h_in": state.grid.h_in,
                                   "n": state.grid.n})
            log.info("regrid at t=%.4g: h_in %.3g -> %.3g", state.t, old.h_in, state.grid.h_in)
            sup = float(np.max(np.abs(state.face_gradient())))

        row = record(state, b % cfg.snapshot_stride == 0 or b == n_rows)
        if row["sup_dphi"] > cfg.gradient_cap(state.grid, state.k):
            result.status = "resolution-exhausted"
            result.message = (f"sup|d_r phi| = {row['sup_dphi']:.4g} exceeds the cap "
                              f"{cfg.gradient_cap(state.grid, state.k):.4g} at t={state.t:.6g}")
            if not (b % cfg.snapshot_stride == 0 or b == n_rows):
                if keep_snapshots:
                    result.snapshots.append(state.copy())
                if on_snapshot:
                    on_snapshot(state)
            break
    result.final = state
    return result
