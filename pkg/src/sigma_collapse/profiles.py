"""Closed-form harmonic-map solitons ``I(r) = 2 arctan((lam r)^k)`` and derived profiles.

All evaluators accept scalars or numpy arrays and are written in terms of
``q = min(x^k, x^-k)`` with ``x = lam * r``.  Every rational closed form is
symmetric or antisymmetric under ``x^k -> x^-k``, so this keeps the tails free
of overflow for any ``k`` and any radius.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HomotopyClass",
    "SolitonProfile",
    "CoefficientsUnavailable",
    "register_w0_coefficient",
    "w0_coefficient",
    "W0_B",
    "eval_I",
    "eval_J",
    "eval_K",
    "eval_trig_composites",
    "eval_w0",
]

# b coefficient in the leading radiation term w0; a is computed by quadrature.
W0_B = 0.25

_W0_A: dict[int, float] = {}


class CoefficientsUnavailable(LookupError):
    """Raised when the w0 coefficient ``a`` for a degree has not been computed."""


def register_w0_coefficient(k: int, a: float) -> None:
    _W0_A[int(k)] = float(a)


def w0_coefficient(k: int) -> float:
    try:
        return _W0_A[int(k)]
    except KeyError:
        raise CoefficientsUnavailable(
            f"w0 coefficient a for k={k} not computed; call functionals.compute_constants({k})"
        ) from None


@dataclass(frozen=True)
class HomotopyClass:
    """Topological degree ``k`` of the equivariant map."""

    k: int

    def __post_init__(self) -> None:
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"homotopy degree must be an integer >= 2, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def theorem_regime(self) -> bool:
        """True when the blowup theorem applies (k >= 4)."""
        return self.k >= 4


@dataclass(frozen=True)
class SolitonProfile:
    """Soliton of degree ``k`` at inverse-length scale ``lam``."""

    k: int
    lam: float = 1.0

    def __post_init__(self) -> None:
        HomotopyClass(self.k)
        if not (self.lam > 0 and np.isfinite(self.lam)):
            raise ValueError(f"scale lam must be positive and finite, got {self.lam!r}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def homotopy(self) -> HomotopyClass:
        return HomotopyClass(self.k)

    def rescaled(self, lam: float) -> "SolitonProfile":
        return SolitonProfile(self.k, lam)

    # -- internals ---------------------------------------------------------
    def _q(self, r):
        """``q = min(x^k, x^-k)`` and ``s = +1`` inside the core (x < 1), ``-1`` outside."""
        x = self.lam * np.asarray(r, dtype=float)
        if np.any(x < 0) or not np.all(np.isfinite(x)):
            raise ValueError("radius must be finite and nonnegative")
        with np.errstate(divide="ignore"):
            logx = np.log(x)
        q = np.exp(-self.k * np.abs(logx))  # x = 0 gives exp(-inf) = 0
        s = np.where(x <= 1.0, 1.0, -1.0)
        return q, s

    # -- profiles ----------------------------------------------------------
    def I(self, r):
        """Soliton angle ``2 arctan(x^k)``."""
        q, s = self._q(r)
        at = 2.0 * np.arctan(q)
        return np.where(s > 0, at, np.pi - at)[()]

    def J(self, r):
        """Ground state ``r dI/dr = k sin I = 2k x^k / (1 + x^2k)``."""
        q, _ = self._q(r)
        return (2.0 * self.k * q / (1.0 + q * q))[()]

    def sin_I(self, r):
        q, _ = self._q(r)
        return (2.0 * q / (1.0 + q * q))[()]

    def cos_I(self, r):
        q, s = self._q(r)
        return (s * (1.0 - q * q) / (1.0 + q * q))[()]

    def sin_2I(self, r):
        q, s = self._q(r)
        d = 1.0 + q * q
        return (s * 4.0 * q * (1.0 - q * q) / (d * d))[()]

    def cos_2I(self, r):
        q, _ = self._q(r)
        q2 = q * q
        d = 1.0 + q2
        return ((1.0 - 6.0 * q2 + q2 * q2) / (d * d))[()]

    def trig_composites(self, r) -> dict:
        return {"cos_I": self.cos_I(r), "sin_2I": self.sin_2I(r), "cos_2I": self.cos_2I(r)}

    def rdJ(self, r):
        """``(r d/dr) J = k cos(I) J`` evaluated at ``lam r``."""
        return (self.k * self.cos_I(r) * self.J(r))[()]

    def rdrdJ(self, r):
        """``(r d/dr)^2 J = k^2 cos^2(I) J - J^3``."""
        J = self.J(r)
        c = self.cos_I(r)
        return (self.k**2 * c * c * J - J**3)[()]

    def r2J(self, r):
        """``(r^2 J)_lam``, i.e. ``x^2 J(x)`` with ``x = lam r``."""
        x = self.lam * np.asarray(r, dtype=float)
        return (x * x * self.J(r))[()]

    def K(self, r):
        """Solution of ``H_1 K = -(J + r J')``: ``x^2 J(x) / 4``."""
        return (0.25 * self.r2J(r))[()]

    def w0(self, lam_dot: float, r, a: float | None = None):
        """Leading radiation term ``(lam_dot^2/lam^4) (a J_lam + b (r^2 J)_lam)``.

        ``a`` defaults to the value registered by
        :func:`sigma_collapse.functionals.compute_constants`.
        """
        if a is None:
            a = w0_coefficient(self.k)
        pref = lam_dot * lam_dot / self.lam**4
        return (pref * (a * self.J(r) + W0_B * self.r2J(r)))[()]

    def r_dr_w0_shape(self, r, a: float):
        """``r d/dr`` of ``a J_lam + b (r^2 J)_lam``."""
        x = self.lam * np.asarray(r, dtype=float)
        rdJ = self.rdJ(r)
        return (a * rdJ + W0_B * (2.0 * x * x * self.J(r) + x * x * rdJ))[()]

    def potential_Q(self, r):
        """Potential of ``H_lam``: ``k^2 cos(2 I_lam) / r^2``."""
        r = np.asarray(r, dtype=float)
        return (self.k**2 * self.cos_2I(r) / (r * r))[()]

    def potential_V(self, r):
        """Potential of the companion ``A A*``: ``(k^2+1)/r^2 + 2k cos(I_lam)/r^2``."""
        r = np.asarray(r, dtype=float)
        return (((self.k**2 + 1) + 2.0 * self.k * self.cos_I(r)) / (r * r))[()]

    def minus_dr_potential_V(self, r):
        """Analytic ``-dV/dr``."""
        r = np.asarray(r, dtype=float)
        s = self.sin_I(r)
        k = self.k
        return ((2.0 * (k * k + 1) + 4.0 * k * self.cos_I(r) + 2.0 * k * k * s * s) / r**3)[()]

    def minus_dt_potential_V(self, r, lam_dot: float):
        """``-dV/dt = (lam_dot/lam) 2k^2 sin^2(I_lam) / r^2`` for a moving scale."""
        r = np.asarray(r, dtype=float)
        s = self.sin_I(r)
        return ((lam_dot / self.lam) * 2.0 * self.k**2 * s * s / (r * r))[()]


def eval_I(p: SolitonProfile, r):
    return p.I(r)


def eval_J(p: SolitonProfile, r):
    return p.J(r)


def eval_K(p: SolitonProfile, r):
    return p.K(r)


def eval_trig_composites(p: SolitonProfile, r) -> dict:
    return p.trig_composites(r)


def eval_w0(p: SolitonProfile, lam_dot: float, r, a: float | None = None):
    return p.w0(lam_dot, r, a)
