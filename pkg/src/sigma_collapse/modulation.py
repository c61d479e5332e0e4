"""Soliton scale ``lam(t)`` from snapshots, the ``u = w0 + w`` split and the error functionals.

``lam`` is fixed by the orthogonality condition ``<phi - I_lam, J_lam> = 0``
(inner products over ``r dr`` on the snapshot grid).  Its derivative is
available in closed form,

    g'(lam) = -<J_lam, J_lam> / lam + <phi - I_lam, (r d_r J)_lam> / lam,

so the root is polished by Newton steps inside a sign-change bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .evolve import interpolate4
from .functionals import FieldState, compute_constants, orbital_energy
from .operators import build_operator, apply, fornberg_weights
from .profiles import CoefficientsUnavailable, SolitonProfile, w0_coefficient
from .records import write_csv

__all__ = [
    "LambdaFit",
    "NoRootInBracket",
    "MaxIterations",
    "TraceTooShort",
    "InsufficientSnapshots",
    "extract_lambda",
    "estimate_lambda",
    "Decomposition",
    "decompose",
    "eps1",
    "calE",
    "ode_residual",
    "MorawetzConfig",
    "morawetz_energy",
    "morawetz_ratio",
    "ModulationTrace",
    "modulate_run",
    "MODULATION_COLUMNS",
    "fd_derivatives",
]

MODULATION_COLUMNS = ("t", "lambda", "lambda_dot", "lambda_ddot", "E0", "eps1", "calE",
                      "ortho_residual", "newton_iters", "ode_residual", "status")


class NoRootInBracket(ValueError):
    pass


class MaxIterations(RuntimeError):
    pass


class TraceTooShort(ValueError):
    pass


class InsufficientSnapshots(ValueError):
    pass


@dataclass
class LambdaFit:
    lam: float
    residual: float  # |<u, J_lam>| / <J_lam, J_lam>
    iters: int


def _g_and_dg(state: FieldState, lam: float):
    p = SolitonProfile(state.k, lam)
    r = state.grid.r
    J = p.J(r)
    u = state.phi - p.I(r)
    JJ = state.grid.inner(J, J)
    g = state.grid.inner(u, J)
    dg = (-JJ + state.grid.inner(u, p.rdJ(r))) / lam
    return g, dg, JJ


def extract_lambda(state: FieldState, lam_guess: float, ortho_tol: float = 1e-13,
                   max_iter: int = 100, bracket_factor: float = 4.0) -> LambdaFit:
    """Root of ``g(lam) = <phi - I_lam, J_lam>`` nearest ``lam_guess``.

    Newton steps are accepted while they stay inside the
    current sign-change bracket; otherwise the bracket is bisected.
    Converged when ``|g| <= ortho_tol * <J_lam, J_lam>``.
    """
    if not (lam_guess > 0 and math.isfinite(lam_guess)):
        raise ValueError("lam_guess must be positive")
    lo, hi = lam_guess / bracket_factor, lam_guess * bracket_factor
    glo = _g_and_dg(state, lo)[0]
    ghi = _g_and_dg(state, hi)[0]
    lam = lam_guess
    g, dg, JJ = _g_and_dg(state, lam)
    if abs(g) <= ortho_tol * JJ:
        return LambdaFit(lam, abs(g) / JJ, 0)
    if not (glo * ghi < 0 or glo == 0 or ghi == 0):
        raise NoRootInBracket(
            f"g(lam) does not change sign on [{lo:.4g}, {hi:.4g}] (g = {glo:.3e}, {ghi:.3e})")
    # shrink the bracket to the half that contains the guess's root
    if g * glo < 0:
        hi, ghi = lam, g
    else:
        lo, glo = lam, g
    for it in range(1, max_iter + 1):
        cand = lam - g / dg if dg != 0 else math.nan
        if not (lo < cand < hi):
            cand = math.sqrt(lo * hi)
        step = abs(cand - lam)
        lam = cand
        g, dg, JJ = _g_and_dg(state, lam)
        if abs(g) <= ortho_tol * JJ or step <= 4e-16 * lam:
            return LambdaFit(lam, abs(g) / JJ, it)
        if g * glo < 0:
            hi, ghi = lam, g
        else:
            lo, glo = lam, g
    raise MaxIterations(f"lambda extraction did not converge in {max_iter} iterations (lam={lam:.6g})")


def estimate_lambda(state: FieldState) -> LambdaFit:
    """Cold-start extraction: guess ``lam`` from ``sup |d_r phi|`` and polish with :func:`extract_lambda`.

    For the soliton ``sup |d_r I_lam| = lam sup |d_r I_1|``.
    """
    r1 = np.geomspace(1e-3, 1e3, 4001)
    p = SolitonProfile(state.k)
    ref = float(np.max(p.J(r1) / r1))
    guess = float(np.max(np.abs(state.face_gradient()))) / ref
    if not (guess > 0 and math.isfinite(guess)):
        raise NoRootInBracket("field has no gradient to locate a soliton")
    return extract_lambda(state, guess)


# ---------------------------------------------------------------------------
# decomposition and functionals
# ---------------------------------------------------------------------------
@dataclass
class Decomposition:
    u: np.ndarray
    w0: np.ndarray
    w: np.ndarray
    w_dot_J: float
    w0_dot_J: float


def _w0_a(k: int) -> float:
    try:
        return w0_coefficient(k)
    except CoefficientsUnavailable:
        return compute_constants(k).a


def decompose(state: FieldState, lam: float, lam_dot: float) -> Decomposition:
    """``u = phi - I_lam``, ``w0`` the leading radiation profile, ``w = u - w0``."""
    p = SolitonProfile(state.k, lam)
    r = state.grid.r
    u = state.phi - p.I(r)
    w0 = p.w0(lam_dot, r, _w0_a(state.k)) if lam_dot != 0 else np.zeros_like(u)
    w = u - w0
    J = p.J(r)
    return Decomposition(u, w0, w, state.grid.inner(w, J), state.grid.inner(w0, J))


def eps1(state: FieldState, lam: float, lam_dot: float = 0.0) -> float:
    """``2 lam^2 <u, (r d_r J)_lam>``: the ``lam_dot``-cancelled form of ``2 lam^3 lam_dot^-1 <u, d_t J_lam>``."""
    p = SolitonProfile(state.k, lam)
    r = state.grid.r
    return 2.0 * lam * lam * state.grid.inner(state.phi - p.I(r), p.rdJ(r))


def _n_tilde(u, sin2I, cos2I, k, r):
    s = np.sin(u)
    return k * k * (sin2I * (s * s - u * u) + cos2I * (u - 0.5 * np.sin(2.0 * u))) / (r * r)


def calE(state: FieldState, lam: float, lam_dot: float, lam_ddot: float,
         parts: bool = False):
    """Sum of the five inner products defining the error term ``E``."""
    k = state.k
    g = state.grid
    r = g.r
    p = SolitonProfile(k, lam)
    d = decompose(state, lam, lam_dot)
    J = p.J(r)
    rdJ = p.rdJ(r)
    rdrdJ = p.rdrdJ(r)
    Jt = (lam_dot / lam) * rdJ
    Jtt = (lam_ddot / lam - lam_dot**2 / lam**2) * rdJ + (lam_dot / lam) ** 2 * rdrdJ
    sin2I = p.sin_2I(r)
    terms = {
        "w_Jt": 2.0 * g.inner(d.w, Jt) * lam_dot,
        "w_Jtt": g.inner(d.w, Jtt) * lam,
        "w0_rdJ": g.inner(d.w0, (lam_ddot - 2.0 * lam_dot**2 / lam) * rdJ),
        "quad": -k * k * g.inner(d.w * (2.0 * d.w0 + d.w) / (r * r), sin2I * J) * lam,
        "Ntilde": -g.inner(_n_tilde(d.u, sin2I, p.cos_2I(r), k, r), J) * lam,
    }
    total = float(sum(terms.values()))
    return (total, terms) if parts else total


def ode_residual(state: FieldState, lam: float, lam_dot: float) -> float:
    """``lam_dot (C0 - lam^2 <u, (r d_r J)_lam>) - lam^3 <d_t phi, J_lam>`` with grid ``C0``."""
    p = SolitonProfile(state.k, lam)
    r = state.grid.r
    g = state.grid
    J = p.J(r)
    C0h = g.inner(J, J) * lam * lam
    u = state.phi - p.I(r)
    return lam_dot * (C0h - lam * lam * g.inner(u, p.rdJ(r))) - lam**3 * g.inner(state.pi, J)


# ---------------------------------------------------------------------------
# Morawetz energy
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class MorawetzConfig:
    delta: float = 0.1
    t0: float | None = None
    t1: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.delta <= 0.5):
            raise ValueError("delta must lie in (0, 0.5]")


def morawetz_energy(snapshots: Sequence[FieldState], lams: Sequence[float],
                    lam_dots: Sequence[float], cfg: MorawetzConfig = MorawetzConfig(),
                    details: bool = False):
    """``E_delta[A_lam w](t0, t1)`` from snapshots inside the window.

    ``L psi = (d_t + d_r) psi`` uses centred differences in time across
    snapshots (one-sided at the window ends).  Snapshots on other grids are
    interpolated onto the grid of the first one in the window.
    """
    t_all = np.array([s.t for s in snapshots])
    t0 = t_all[0] if cfg.t0 is None else cfg.t0
    t1 = t_all[-1] if cfg.t1 is None else cfg.t1
    sel = np.nonzero((t_all >= t0 - 1e-12) & (t_all <= t1 + 1e-12))[0]
    if sel.size < 3:
        raise InsufficientSnapshots(f"need >= 3 snapshots in [{t0}, {t1}], found {sel.size}")
    grid = snapshots[sel[0]].grid
    r = grid.r
    delta = cfg.delta
    psis, ts, lam_w = [], [], []
    for i in sel:
        s = snapshots[i]
        lam, lam_dot = float(lams[i]), float(lam_dots[i])
        w = decompose(s, lam, lam_dot).w
        psi = apply(build_operator("A", s.k, lam, s.grid), w)
        if s.grid is not grid and not (s.grid.n == grid.n and np.array_equal(s.grid.faces, grid.faces)):
            psi = interpolate4(s.grid.r, psi, r)
        psis.append(psi)
        ts.append(s.t)
        lam_w.append(lam)
    psis = np.array(psis)
    ts = np.array(ts)
    psi_t = np.empty_like(psis)
    for j in range(len(ts)):
        idx = np.array([j - 1, j, j + 1]) if 0 < j < len(ts) - 1 else (
            np.array([0, 1, 2]) if j == 0 else np.array([-3, -2, -1]) + len(ts))
        wts = fornberg_weights(ts[j], ts[idx], 1)
        psi_t[j] = wts @ psis[idx]
    fixed, flux = [], []
    for j in range(len(ts)):
        lam = lam_w[j]
        base = (lam * r) ** delta / (1.0 + r**delta) / lam
        Lpsi = psi_t[j] + grid.derivative(psis[j])
        fixed.append(grid.integrate(base * (Lpsi**2 + psis[j] ** 2 / r**2)))
        flux.append(grid.integrate(base * (Lpsi**2 / ((1.0 + r**delta) * r) + psis[j] ** 2 / r**3)))
    fixed = np.array(fixed)
    flux = np.array(flux)
    st = float(np.trapezoid(flux, ts)) if hasattr(np, "trapezoid") else float(np.trapz(flux, ts))
    value = float(fixed.max()) + st
    if details:
        return value, {"sup_term": float(fixed.max()), "spacetime_term": st, "t0": float(ts[0]),
                       "t1": float(ts[-1]), "n_snapshots": int(len(ts))}
    return value


def morawetz_ratio(value: float, eps: float, c0: float, lams, lam_dots) -> float:
    """``E_delta / (c0^2 eps^2 + eps sup lam_dot^4 / lam^7)``."""
    lams = np.asarray(lams, dtype=float)
    lam_dots = np.asarray(lam_dots, dtype=float)
    denom = c0 * c0 * eps * eps + eps * float(np.max(lam_dots**4 / lams**7))
    return value / denom if denom > 0 else math.inf


# ---------------------------------------------------------------------------
# trace driver
# ---------------------------------------------------------------------------
def fd_derivatives(t: np.ndarray, y: np.ndarray, order: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives on (possibly nonuniform) samples.

    Five-point stencils, centred in the interior and shifted inward at the
    ends; falls back to fewer points on short traces.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n = t.size
    if n < 3:
        raise TraceTooShort("need at least 3 samples for lambda_ddot")
    width = min(order + 1, n)
    d1 = np.empty(n)
    d2 = np.empty(n)
    half = width // 2
    for i in range(n):
        a = min(max(i - half, 0), n - width)
        idx = np.arange(a, a + width)
        d1[i] = fornberg_weights(t[i], t[idx], 1) @ y[idx]
        d2[i] = fornberg_weights(t[i], t[idx], 2) @ y[idx]
    return d1, d2


@dataclass
class ModulationTrace:
    rows: list = field(default_factory=list)
    k: int = 0

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r.get(name) is None else r[name] for r in self.rows], dtype=float)

    def ok_rows(self) -> list:
        return [r for r in self.rows if r.get("status") == "ok"]

    def write(self, path) -> None:
        write_csv(path, MODULATION_COLUMNS, self.rows)


def modulate_run(snapshots: Iterable[FieldState], lam0: float = 1.0, out_csv=None,
                 ortho_tol: float = 1e-13) -> tuple[ModulationTrace, list]:
    """Extract ``lam`` on every snapshot (warm-started) and fill all trace columns.

    Returns the trace and the list of snapshots that were read (for Morawetz
    post-processing).  A failed extraction marks its row and later rows
    restart from the last good ``lam``.
    """
    snaps = list(snapshots)
    rows = []
    lam = lam0
    for s in snaps:
        row = {"t": s.t, "lambda": None, "newton_iters": None, "ortho_residual": None, "status": "ok"}
        try:
            fit = extract_lambda(s, lam, ortho_tol=ortho_tol)
            lam = fit.lam
            row.update({"lambda": fit.lam, "newton_iters": fit.iters, "ortho_residual": fit.residual})
        except (NoRootInBracket, MaxIterations) as exc:
            row["status"] = type(exc).__name__
        rows.append(row)
    good = [i for i, r in enumerate(rows) if r["status"] == "ok"]
    if len(good) >= 3:
        t = np.array([rows[i]["t"] for i in good])
        lam_arr = np.array([rows[i]["lambda"] for i in good])
        d1, d2 = fd_derivatives(t, lam_arr)
        for j, i in enumerate(good):
            s = snaps[i]
            rows[i]["lambda_dot"] = float(d1[j])
            rows[i]["lambda_ddot"] = float(d2[j])
            L = lam_arr[j]
            u = s.phi - SolitonProfile(s.k, L).I(s.grid.r)
            rows[i]["E0"] = orbital_energy(u, s.pi, s.k, s.grid)
            rows[i]["eps1"] = eps1(s, L)
            rows[i]["calE"] = calE(s, L, d1[j], d2[j])
            rows[i]["ode_residual"] = ode_residual(s, L, d1[j])
    else:
        for i in good:
            rows[i]["status"] = "trace-too-short"
    trace = ModulationTrace(rows, snaps[0].k if snaps else 0)
    if out_csv is not None:
        trace.write(out_csv)
    return trace, snaps
