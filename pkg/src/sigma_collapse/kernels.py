"""Hot loops of the radial wave-map solver.

Each kernel has a numba ``@njit`` version and a vectorised numpy version with
identical arithmetic.  The numba path is used when numba imports and the
environment variable ``SIGMA_COLLAPSE_NUMBA`` is not set to ``0``.

Discretisation (finite volume on a cell-centred grid with faces ``fr``):

    acc_i = [fr_{i+1} (phi_{i+1}-phi_i)/d_i - fr_i (phi_i-phi_{i-1})/d_{i-1}] / w_i
            - k^2 sin(2 phi_i) / (2 r_i^2)

``fr_0 = 0`` so the inner flux vanishes; this is the same as reflecting an odd
ghost value through the origin.  The last node is a frozen Dirichlet node.
The semi-discrete system is the Euler-Lagrange flow of the discrete energy
computed by :func:`energy`, so leapfrog conserves it up to O(dt^2).
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = ["BACKEND", "accel", "acceleration", "leapfrog", "energy", "set_backend"]

try:  # pragma: no cover - depends on environment
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def _default_backend() -> str:
    flag = os.environ.get("SIGMA_COLLAPSE_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off") or not _HAVE_NUMBA:
        return "numpy"
    return "numba"


BACKEND = _default_backend()


def set_backend(name: str) -> None:
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(name)
    if name == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    BACKEND = name


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------
@njit(cache=True, fastmath=False)
def _acc_nb(phi, out, fr, inv_d, inv_w, inv_r2, half_k2):
    n = phi.shape[0]
    flux_left = 0.0
    for i in range(n - 1):
        flux_right = fr[i + 1] * (phi[i + 1] - phi[i]) * inv_d[i]
        out[i] = (flux_right - flux_left) * inv_w[i] - half_k2 * math.sin(2.0 * phi[i]) * inv_r2[i]
        flux_left = flux_right
    out[n - 1] = 0.0


@njit(cache=True, fastmath=False)
def _leapfrog_nb(phi, pi, dt, nsteps, fr, inv_d, inv_w, inv_r2, half_k2, acc):
    half = 0.5 * dt
    n = phi.shape[0]
    _acc_nb(phi, acc, fr, inv_d, inv_w, inv_r2, half_k2)
    for _ in range(nsteps):
        for i in range(n):
            pi[i] += half * acc[i]
        for i in range(n):
            phi[i] += dt * pi[i]
        _acc_nb(phi, acc, fr, inv_d, inv_w, inv_r2, half_k2)
        for i in range(n):
            pi[i] += half * acc[i]


@njit(cache=True, fastmath=False)
def _energy_nb(phi, pi, fr, inv_d, w, inv_r2, k2):
    n = phi.shape[0]
    kin = 0.0
    grad = 0.0
    pot = 0.0
    for i in range(n):
        kin += w[i] * pi[i] * pi[i]
        s = math.sin(phi[i])
        pot += w[i] * k2 * s * s * inv_r2[i]
    for i in range(n - 1):
        dphi = phi[i + 1] - phi[i]
        grad += fr[i + 1] * dphi * dphi * inv_d[i]
    return kin, grad, pot


# --------------------------------------------------------------------------
# numpy kernels
# --------------------------------------------------------------------------
def _acc_np(phi, out, fr, inv_d, inv_w, inv_r2, half_k2):
    flux = np.empty(phi.shape[0])
    flux[0] = 0.0
    flux[1:] = fr[1:-1] * (phi[1:] - phi[:-1]) * inv_d
    out[:-1] = (flux[1:] - flux[:-1]) * inv_w[:-1] - half_k2 * np.sin(2.0 * phi[:-1]) * inv_r2[:-1]
    out[-1] = 0.0


def _leapfrog_np(phi, pi, dt, nsteps, fr, inv_d, inv_w, inv_r2, half_k2, acc):
    half = 0.5 * dt
    _acc_np(phi, acc, fr, inv_d, inv_w, inv_r2, half_k2)
    for _ in range(nsteps):
        pi += half * acc
        phi += dt * pi
        _acc_np(phi, acc, fr, inv_d, inv_w, inv_r2, half_k2)
        pi += half * acc


def _energy_np(phi, pi, fr, inv_d, w, inv_r2, k2):
    kin = float(np.dot(w, pi * pi))
    s = np.sin(phi)
    pot = float(np.dot(w, k2 * s * s * inv_r2))
    dphi = np.diff(phi)
    grad = float(np.dot(fr[1:-1], dphi * dphi * inv_d))
    return kin, grad, pot


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------
class GridCoefficients:
    """Precomputed stencil arrays for one grid and degree."""

    __slots__ = ("fr", "inv_d", "w", "inv_w", "inv_r2", "k2", "half_k2")

    def __init__(self, grid, k: int):
        self.fr = np.ascontiguousarray(grid.faces.copy())
        self.inv_d = np.ascontiguousarray(1.0 / np.diff(grid.r))
        self.w = np.ascontiguousarray(np.array(grid.weights))
        self.inv_w = 1.0 / self.w
        self.inv_r2 = np.ascontiguousarray(1.0 / grid.r**2)
        self.k2 = float(k * k)
        self.half_k2 = 0.5 * self.k2


def accel(coef: GridCoefficients, phi: np.ndarray, backend: str | None = None) -> np.ndarray:
    out = np.empty_like(phi)
    fn = _acc_nb if (backend or BACKEND) == "numba" else _acc_np
    fn(phi, out, coef.fr, coef.inv_d, coef.inv_w, coef.inv_r2, coef.half_k2)
    return out


acceleration = accel


def leapfrog(coef: GridCoefficients, phi: np.ndarray, pi: np.ndarray, dt: float, nsteps: int,
             backend: str | None = None) -> None:
    """Advance ``(phi, pi)`` in place by ``nsteps`` kick-drift-kick steps."""
    acc = np.empty_like(phi)
    fn = _leapfrog_nb if (backend or BACKEND) == "numba" else _leapfrog_np
    fn(phi, pi, float(dt), int(nsteps), coef.fr, coef.inv_d, coef.inv_w, coef.inv_r2,
       coef.half_k2, acc)


def energy(coef: GridCoefficients, phi: np.ndarray, pi: np.ndarray,
           backend: str | None = None) -> tuple[float, float, float]:
    """Return ``(kinetic, gradient, potential)`` parts of ``int [...] r dr`` (no factor pi)."""
    fn = _energy_nb if (backend or BACKEND) == "numba" else _energy_np
    kin, grad, pot = fn(phi, pi, coef.fr, coef.inv_d, coef.w, coef.inv_r2, coef.k2)
    return float(kin), float(grad), float(pot)
