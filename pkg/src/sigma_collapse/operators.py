"""Discrete first-order operators ``A``, ``A*`` and the Hamiltonians ``H = A*A``, ``Ĥ = AA*``.

Every operator is assembled directly from its definition as a sparse matrix:

    A  = -d_r + (k/r) cos I_lam
    A* =  d_r + 1/r + (k/r) cos I_lam
    H  = -(d_r^2 + r^-1 d_r) + k^2 cos(2 I_lam) / r^2
    Ĥ  = -(d_r^2 + r^-1 d_r) + (k^2 + 1)/r^2 + 2k cos(I_lam) / r^2

``A*`` is not the transpose of ``A`` and ``H`` is not the product of the two,
so the factorisation and intertwining identities are genuine O(h^2) checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .grid import RadialGrid
from .profiles import SolitonProfile

__all__ = [
    "DiscreteOperator",
    "build_operator",
    "apply",
    "fornberg_weights",
    "verify_potential_properties",
    "residual_HK",
    "identity_residuals",
    "convergence_study",
    "self_adjointness_defect",
    "bump_family",
    "coercivity_ratio",
    "EmptySample",
    "coercivity_grid",
    "test_function",
]

KINDS = ("A", "Astar", "H", "Htilde", "Q", "V")


def fornberg_weights(x0: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for the ``m``-th derivative at ``x0`` on nodes ``x``."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5 = 1.0, c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for s in range(mn, 0, -1):
                    c[i, s] = c1 * (s * c[i - 1, s - 1] - c5 * c[i - 1, s]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for s in range(mn, 0, -1):
                c[j, s] = (c4 * c[j, s] - s * c[j, s - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def _stencil_matrix(r: np.ndarray, m: int) -> sparse.csr_matrix:
    """3-point ``m``-th derivative (m = 1, 2), with 3/4-point one-sided rows at the ends."""
    n = r.size
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        w = fornberg_weights(r[i], r[i - 1:i + 2], m)
        rows += [i] * 3
        cols += [i - 1, i, i + 1]
        vals += list(w)
    width = m + 2  # second order one-sided needs m+2 points
    for i, idx in ((0, np.arange(width)), (n - 1, np.arange(n - width, n))):
        w = fornberg_weights(r[i], r[idx], m)
        rows += [i] * width
        cols += list(idx)
        vals += list(w)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    kind: str
    k: int
    lam: float
    grid: RadialGrid
    matrix: sparse.csr_matrix = field(repr=False)

    @property
    def bandwidth(self) -> int:
        coo = self.matrix.tocoo()
        return int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0

    def __call__(self, psi) -> np.ndarray:
        return apply(self, psi)


_CACHE: dict = {}


def _derivative_matrices(grid: RadialGrid):
    key = id(grid)
    hit = _CACHE.get(key)
    if hit is not None and hit[0] is grid:
        return hit[1], hit[2]
    D1 = _stencil_matrix(np.asarray(grid.r), 1)
    D2 = _stencil_matrix(np.asarray(grid.r), 2)
    if len(_CACHE) > 16:
        _CACHE.clear()
    _CACHE[key] = (grid, D1, D2)
    return D1, D2


def build_operator(kind: str, k: int, lam: float, grid: RadialGrid) -> DiscreteOperator:
    if kind not in KINDS:
        raise ValueError(f"unknown operator kind {kind!r}; expected one of {KINDS}")
    p = SolitonProfile(k, lam)
    r = np.asarray(grid.r)
    D1, D2 = _derivative_matrices(grid)
    diag = sparse.diags
    if kind == "A":
        M = -D1 + diag(k * p.cos_I(r) / r)
    elif kind == "Astar":
        M = D1 + diag((1.0 + k * p.cos_I(r)) / r)
    elif kind in ("H", "Htilde"):
        lap = D2 + diag(1.0 / r) @ D1
        pot = p.potential_Q(r) if kind == "H" else p.potential_V(r)
        M = -lap + diag(pot)
    elif kind == "Q":
        M = diag(p.potential_Q(r))
    else:
        M = diag(p.potential_V(r))
    return DiscreteOperator(kind, int(k), float(lam), grid, sparse.csr_matrix(M))


def apply(op: DiscreteOperator, psi, grid: RadialGrid | None = None) -> np.ndarray:
    """Apply ``op`` to a grid function (``grid`` is checked against the operator's grid if given)."""
    if grid is not None:
        op.grid.check_same(grid)
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (op.grid.n,):
        from .grid import GridMismatch

        raise GridMismatch(f"grid function has {psi.shape} values, operator grid has {op.grid.n}")
    return op.matrix @ psi


# ---------------------------------------------------------------------------
# pointwise potential certificates
# ---------------------------------------------------------------------------
def verify_potential_properties(k: int, lam: float, grid: RadialGrid, lam_dot: float = 0.0) -> dict:
    """Check positivity, space repulsivity and time repulsivity of ``V_lam`` at every node.

    Margins are reported after multiplying by the natural power of ``r`` so they
    are comparable across nodes.
    """
    p = SolitonProfile(k, lam)
    r = np.asarray(grid.r)
    pos = p.potential_V(r) * r**2 - (k - 1) ** 2
    rep = p.minus_dr_potential_V(r) * r**3 - 2 * (k - 1) ** 2
    # direct floating comparisons, so the booleans are about the stated inequalities themselves
    pos_ok = bool(np.all(p.potential_V(r) >= (k - 1) ** 2 / r**2))
    rep_ok = bool(np.all(p.minus_dr_potential_V(r) >= 2 * (k - 1) ** 2 / r**3))
    dtv = p.minus_dt_potential_V(r, lam_dot)
    report = {
        "k": int(k),
        "lambda": float(lam),
        "lambda_dot": float(lam_dot),
        "positivity": pos_ok,
        "positivity_margin": float(pos.min()),
        "positivity_worst_r": float(r[np.argmin(pos)]),
        "space_repulsive": rep_ok,
        "space_repulsive_margin": float(rep.min()),
        "space_repulsive_worst_r": float(r[np.argmin(rep)]),
        "time_repulsive": bool(np.all(dtv >= 0.0)) if lam_dot >= 0 else bool(np.all(dtv <= 0.0)),
        "time_repulsive_min": float(dtv.min()),
        "time_repulsive_worst_r": float(r[np.argmin(dtv)]),
    }
    return report


# ---------------------------------------------------------------------------
# identity residuals and order of accuracy
# ---------------------------------------------------------------------------
def _window(grid: RadialGrid, lo: float, hi: float) -> np.ndarray:
    r = np.asarray(grid.r)
    m = (r >= lo) & (r <= hi)
    if not np.any(m):
        raise ValueError(f"no grid nodes in window [{lo}, {hi}]")
    return m


def residual_HK(k: int, grid: RadialGrid, window: tuple[float, float] = (0.05, 10.0)) -> float:
    """``max |H_1 K + J + r J'| / max |J|`` over interior nodes."""
    p = SolitonProfile(k)
    r = np.asarray(grid.r)
    H = build_operator("H", k, 1.0, grid)
    res = apply(H, p.K(r)) + p.J(r) + p.rdJ(r)
    m = _window(grid, *window)
    return float(np.max(np.abs(res[m])) / np.max(np.abs(p.J(r))))


def test_function(r):
    """Smooth test function ``r^2 e^{-r}`` for the factorisation identities."""
    r = np.asarray(r, dtype=float)
    return r * r * np.exp(-r)


def identity_residuals(k: int, lam: float, grid: RadialGrid,
                       window: tuple[float, float] = (0.05, 10.0)) -> dict:
    """Max-norm residuals of the kernel, factorisation, intertwining and ``H_1 K`` identities."""
    r = np.asarray(grid.r)
    p = SolitonProfile(k, lam)
    A = build_operator("A", k, lam, grid)
    As = build_operator("Astar", k, lam, grid)
    H = build_operator("H", k, lam, grid)
    Ht = build_operator("Htilde", k, lam, grid)
    psi = test_function(r)
    m = _window(grid, *window)
    mk = _window(grid, window[0] / lam, window[1] / lam)
    J = p.J(r)
    AJ = apply(A, J)
    fact = apply(H, psi) - apply(As, apply(A, psi))
    inter = apply(A, apply(H, psi)) - apply(Ht, apply(A, psi))
    # the composite stencils reach two nodes in from each end
    inner = np.zeros_like(m)
    inner[2:-2] = True
    return {
        "kernel_AJ": float(np.max(np.abs(AJ[mk])) / np.max(np.abs(J))),
        "factorization": float(np.max(np.abs(fact[m & inner]))),
        "intertwining": float(np.max(np.abs(inter[m & inner]))),
        "HK": residual_HK(k, grid, window),
    }


def self_adjointness_defect(k: int, lam: float, grid: RadialGrid) -> float:
    """``|<H psi, chi> - <psi, H chi>|`` for two bumps supported well inside the grid."""
    r = np.asarray(grid.r)
    psi = np.exp(-((r - 2.0) ** 2) / 0.3)
    chi = r**3 * np.exp(-((r - 3.0) ** 2) / 0.5)
    H = build_operator("H", k, lam, grid)
    return abs(grid.inner(apply(H, psi), chi) - grid.inner(psi, apply(H, chi)))


def convergence_study(k: int, lam: float = 1.0, levels: int = 3, n0: int = 1000,
                      r_max: float = 20.0) -> dict:
    """Residuals on ``levels + 1`` uniform grids (``h`` halved each time) and observed orders."""
    hs, rows = [], []
    for lev in range(levels + 1):
        n = n0 * 2**lev
        g = RadialGrid.uniform(n, r_max / lam if lam > 1 else r_max)
        hs.append(g.h_in)
        rows.append(identity_residuals(k, lam, g))
    out = {"h": hs, "residuals": rows, "orders": {}}
    for key in rows[0]:
        vals = [row[key] for row in rows]
        out["orders"][key] = [math.log2(vals[i] / vals[i + 1]) if vals[i + 1] > 0 else math.inf
                              for i in range(levels)]
    return out


# ---------------------------------------------------------------------------
# coercivity
# ---------------------------------------------------------------------------
class EmptySample(ValueError):
    pass


def bump_family(grid: RadialGrid, k: int, lam: float, n: int = 200, seed: int = 20240601,
                max_bumps: int = 8, centers: tuple[float, float] = (1e-2, 1e2)) -> list[np.ndarray]:
    """Random sums of bumps that are Gaussian in ``log r``, projected orthogonal to ``J_lam``."""
    rng = np.random.default_rng(seed)
    r = np.asarray(grid.r)
    logr = np.log(r)
    J = SolitonProfile(k, lam).J(r)
    JJ = grid.inner(J, J)
    out = []
    lo, hi = np.log(centers[0]), np.log(centers[1])
    for _ in range(n):
        nb = int(rng.integers(1, max_bumps + 1))
        psi = np.zeros_like(r)
        for _ in range(nb):
            c = rng.uniform(lo, hi)
            width = rng.uniform(0.15, 1.0)
            amp = rng.normal()
            psi += amp * np.exp(-0.5 * ((logr - c) / width) ** 2)
        psi -= grid.inner(psi, J) / JJ * J
        out.append(psi)
    return out


def _quadratic_forms(variant: str, psi, Apsi, r, lam: float, delta: float, _deriv=None):
    if variant == "c_app1":
        d = _deriv(psi)
        return Apsi**2, d * d + psi**2 / r**2
    wt = (lam * r) ** delta / (1.0 + r) ** delta
    if variant == "c_app2":
        return wt * Apsi**2 / r**2, wt * psi**2 / r**4
    if variant == "c_app3":
        return wt * Apsi**2 / r**3, wt * psi**2 / r**5
    raise ValueError(f"unknown coercivity variant {variant!r}")


def coercivity_ratio(k: int, lam: float, sample, variant: str, grid: RadialGrid,
                     delta: float = 0.1, ortho_tol: float = 1e-8, details: bool = False):
    """Minimum over ``sample`` of ``RHS / LHS`` for one of the coercive bounds.

    Members not orthogonal to ``J_lam`` (relative tolerance ``ortho_tol``) are
    excluded.  Raises :class:`EmptySample` if nothing remains.
    """
    r = np.asarray(grid.r)
    J = SolitonProfile(k, lam).J(r)
    nJ = math.sqrt(grid.inner(J, J))
    A = build_operator("A", k, lam, grid)
    ratios, excluded = [], 0
    for psi in sample:
        psi = np.asarray(psi, dtype=float)
        npsi = math.sqrt(grid.inner(psi, psi))
        if npsi == 0.0 or abs(grid.inner(psi, J)) > ortho_tol * npsi * nJ:
            excluded += 1
            continue
        rhs, lhs = _quadratic_forms(variant, psi, apply(A, psi), r, lam, delta, grid.derivative)
        ratios.append(grid.integrate(rhs) / grid.integrate(lhs))
    if not ratios:
        raise EmptySample(f"no admissible sample members ({excluded} excluded as non-orthogonal)")
    value = float(min(ratios))
    if details:
        return value, {"n_used": len(ratios), "n_excluded": excluded, "ratios": ratios}
    return value


def coercivity_grid() -> RadialGrid:
    """Geometric grid resolving bumps from ``1e-2`` to ``1e2`` and the soliton at ``lam <= 100``."""
    return RadialGrid.geometric(1e-5, 1.01, 1e4)


# not a test despite the name
test_function.__test__ = False
