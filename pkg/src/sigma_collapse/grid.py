"""Cell-centred radial grids on ``[0, R_max]``.

Cells are ``[f_i, f_{i+1}]`` with ``f_0 = 0``; nodes sit at cell midpoints, so
the first node is ``r_1 = h_in / 2`` and the origin is never a node.
Quadrature weights are the exact cell volumes ``(f_{i+1}^2 - f_i^2) / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

__all__ = ["RadialGrid", "GridMismatch", "parse_grid_spec"]


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RadialGrid:
    faces: np.ndarray
    grading: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        f = np.ascontiguousarray(self.faces, dtype=float)
        if f.ndim != 1 or f.size < 4:
            raise ValueError("need at least three cells")
        if f[0] != 0.0 or np.any(np.diff(f) <= 0):
            raise ValueError("faces must start at 0 and increase strictly")
        f.setflags(write=False)
        object.__setattr__(self, "faces", f)
        r = 0.5 * (f[1:] + f[:-1])
        w = 0.5 * (f[1:] ** 2 - f[:-1] ** 2)
        r.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "weights", w)

    # -- constructors ------------------------------------------------------
    @classmethod
    def uniform(cls, n: int, r_max: float) -> "RadialGrid":
        f = np.linspace(0.0, r_max, n + 1)
        return cls(f, "uniform", {"N": n, "Rmax": r_max})

    @classmethod
    def geometric(cls, h_in: float, ratio: float, r_max: float) -> "RadialGrid":
        """First cell width ``h_in``, each following cell ``ratio`` times wider."""
        if ratio <= 1.0:
            raise ValueError("geometric ratio must exceed 1")
        n = int(np.ceil(np.log1p(r_max * (ratio - 1.0) / h_in) / np.log(ratio)))
        widths = h_in * ratio ** np.arange(n)
        f = np.concatenate([[0.0], np.cumsum(widths)])
        f *= r_max / f[-1]
        return cls(f, "geometric", {"hin": h_in, "ratio": ratio, "Rmax": r_max, "N": n})

    @classmethod
    def two_zone(cls, n: int, h_in: float, r_c: float, r_max: float) -> "RadialGrid":
        """Uniform cells of width ``h_in`` up to ``r_c``, geometric growth beyond.

        The growth ratio is solved so that exactly ``n`` cells reach ``r_max``.
        """
        n_in = int(round(r_c / h_in))
        if n_in < 2 or n_in >= n - 1:
            raise ValueError(f"two-zone grid: r_c/h_in={n_in} cells leaves no outer zone (N={n})")
        r_c = n_in * h_in
        n_out = n - n_in
        span = r_max - r_c
        if span <= n_out * h_in:
            raise ValueError("two-zone grid: outer zone would need cells narrower than h_in")

        def reach(q):
            return h_in * q * (q**n_out - 1.0) / (q - 1.0) - span

        hi = 1.0 + 8.0 / n_out
        while reach(hi) < 0:
            hi = 1.0 + 2.0 * (hi - 1.0)
        q = brentq(reach, 1.0 + 1e-14, hi, xtol=1e-15, rtol=1e-15)
        widths = h_in * q ** np.arange(1, n_out + 1)
        inner = h_in * np.arange(n_in + 1)
        outer = r_c + np.cumsum(widths)
        f = np.concatenate([inner, outer])
        f[-1] = r_max
        return cls(f, "two-zone", {"N": n, "hin": h_in, "rc": r_c, "Rmax": r_max, "ratio": q})

    # -- geometry ----------------------------------------------------------
    @property
    def n(self) -> int:
        return self.r.size

    @property
    def r_max(self) -> float:
        return float(self.faces[-1])

    @property
    def h_in(self) -> float:
        return float(self.faces[1])

    @property
    def min_spacing(self) -> float:
        return float(np.min(np.diff(self.r)))

    def integrate(self, f) -> float:
        """Midpoint-rule ``int f r dr`` over the grid."""
        return float(np.dot(self.weights, f))

    def inner(self, f, g) -> float:
        return float(np.dot(self.weights, np.asarray(f) * np.asarray(g)))

    def check_same(self, other: "RadialGrid") -> None:
        if other is self:
            return
        if other.n != self.n or not np.array_equal(other.faces, self.faces):
            raise GridMismatch("functions live on different grids")

    def refined_inner(self) -> "RadialGrid":
        """Same outer radius and inner-zone radius, half the inner cell width."""
        if self.grading == "two-zone":
            p = self.params
            n_in = int(round(p["rc"] / p["hin"]))
            return RadialGrid.two_zone(p["N"] + n_in, p["hin"] / 2, p["rc"], p["Rmax"])
        if self.grading == "uniform":
            return RadialGrid.uniform(2 * self.n, self.r_max)
        if self.grading == "geometric":
            p = self.params
            return RadialGrid.geometric(p["hin"] / 2, p["ratio"], p["Rmax"])
        raise ValueError(f"cannot refine a {self.grading!r} grid")

    def describe(self) -> dict:
        return {"grading": self.grading, "n": self.n, "r1": float(self.r[0]),
                "r_max": self.r_max, **{k: float(v) for k, v in self.params.items()}}

    # -- difference stencils ----------------------------------------------
    def derivative(self, f) -> np.ndarray:
        """Second-order first derivative on the nodes (one-sided at both ends)."""
        f = np.asarray(f, dtype=float)
        r = self.r
        out = np.empty_like(f)
        h1 = r[1:-1] - r[:-2]
        h2 = r[2:] - r[1:-1]
        out[1:-1] = (-h2 / (h1 * (h1 + h2)) * f[:-2]
                     + (h2 - h1) / (h1 * h2) * f[1:-1]
                     + h1 / (h2 * (h1 + h2)) * f[2:])
        out[0] = _one_sided(r[0], r[1], r[2], f[0], f[1], f[2])
        out[-1] = _one_sided(r[-1], r[-2], r[-3], f[-1], f[-2], f[-3])
        return out


def _one_sided(x0, x1, x2, f0, f1, f2):
    """Derivative at ``x0`` of the quadratic through three points."""
    d1 = x1 - x0
    d2 = x2 - x0
    return (-(d1 + d2) / (d1 * d2) * f0 + d2 / (d1 * (d2 - d1)) * f1 - d1 / (d2 * (d2 - d1)) * f2)


def parse_grid_spec(spec: str) -> RadialGrid:
    """Parse ``kind:key=val,...`` (e.g. ``two-zone:N=4001,hin=0.005,rc=4,Rmax=60``)."""
    kind, _, rest = spec.partition(":")
    kv = {}
    for part in filter(None, rest.split(",")):
        key, _, val = part.partition("=")
        kv[key.strip()] = float(val)
    kind = kind.strip()
    try:
        if kind == "uniform":
            return RadialGrid.uniform(int(kv["N"]), kv["Rmax"])
        if kind == "geometric":
            return RadialGrid.geometric(kv["hin"], kv["ratio"], kv["Rmax"])
        if kind == "two-zone":
            return RadialGrid.two_zone(int(kv["N"]), kv["hin"], kv["rc"], kv["Rmax"])
    except KeyError as exc:
        raise ValueError(f"grid spec {spec!r} is missing {exc.args[0]!r}") from None
    raise ValueError(f"unknown grid kind {kind!r}")
