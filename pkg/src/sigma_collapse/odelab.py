"""Reduced dynamics of the soliton scale.

The refined model is

    (C0 - eps1) lam_dot = eps0 lam^2 - lam^2 int_0^t E(s) ds,   E = kappa lam_dot^4 / lam^7,

taken with ``eps1 = 0``.  In ``mu = 1/lam`` and ``M = int E`` it becomes the
regular system

    mu_dot = -(eps0 - M) / C0,      M_dot = kappa (eps0 - M)^4 / (C0^4 mu),

which is integrated until ``lam`` passes ``lam_stop``.  The Riccati model is
``kappa = 0`` (``1/lam`` linear in ``t``); the geodesic model integrates
``d^2/dt^2 (1/lam) = 0`` and must produce the same trajectory.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

__all__ = [
    "OdeModel",
    "OdeSolution",
    "StepUnderflow",
    "solve_ode",
    "self_similar_phase_check",
    "SeriesTooShort",
    "RateFit",
    "InsufficientDynamicRange",
    "fit_rate",
    "Coupling",
    "FitDegenerate",
    "couple_from_trace",
]

VARIANTS = ("geodesic", "riccati", "refined")


@dataclass(frozen=True)
class OdeModel:
    variant: str
    C0: float
    eps0: float
    kappa: float = 0.0
    lam0: float = 1.0
    # test hook: replace E(s) by this constant (closed-form check of the memory integral)
    constant_E: float | None = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not self.C0 > 0:
            raise ValueError("C0 must be positive")
        if not self.eps0 >= 0:
            raise ValueError("eps0 must be nonnegative")
        if self.variant == "refined" and self.kappa < 0 and self.constant_E is None:
            warnings.warn("negative memory coefficient: E would speed collapse up", stacklevel=2)


@dataclass
class OdeSolution:
    t: np.ndarray
    lam: np.ndarray
    lam_dot: np.ndarray
    memory: np.ndarray
    T_star: float
    status: str
    model: OdeModel
    solver_t: np.ndarray = field(default=None, repr=False)

    def rows(self):
        for i in range(self.t.size):
            yield {"t": self.t[i], "lambda": self.lam[i], "lambda_dot": self.lam_dot[i],
                   "memory_integral": self.memory[i]}


class StepUnderflow(RuntimeError):
    def __init__(self, message: str, t: float, state):
        super().__init__(message)
        self.t = t
        self.state = state


def _rhs(model: OdeModel):
    C0, e0, kap = model.C0, model.eps0, model.kappa
    if model.variant == "geodesic":
        def f(t, y):  # y = (mu, mu_dot, M)
            return [y[1], 0.0, 0.0]
        return f
    if model.constant_E is not None:
        cE = model.constant_E

        def f(t, y):
            return [-(e0 - y[1]) / C0, cE]
        return f
    if model.variant == "riccati" or kap == 0.0:
        def f(t, y):
            return [-(e0 - y[1]) / C0, 0.0]
        return f

    def f(t, y):
        mu = max(y[0], 1e-300)
        d = e0 - y[1]
        return [-d / C0, kap * d**4 / (C0**4 * mu)]
    return f


def solve_ode(model: OdeModel, T_end: float | None = None, rtol: float = 1e-10,
              atol: float = 1e-22, lam_stop: float = 1e12, n_uniform: int = 1001,
              n_tail: int = 400, dt_out: float | None = None) -> OdeSolution:
    """Integrate until ``lam > lam_stop`` (status ``"blowup"``) or ``T_end`` (``"completed"``).

    Output times are a uniform grid (spacing ``dt_out`` or ``span/(n_uniform-1)``)
    plus, after a blowup stop, ``n_tail`` points geometrically approaching the stop time.
    ``T_star`` is ``t_stop + mu / |mu_dot|`` (linear extrapolation of ``1/lam`` to zero),
    or ``inf`` if no blowup was detected.
    """
    C0, e0 = model.C0, model.eps0
    mu0 = 1.0 / model.lam0
    if T_end is None:
        T_end = 100.0 * C0 / e0 if e0 > 0 else 1.0
    f = _rhs(model)
    if model.variant == "geodesic":
        y0 = [mu0, -e0 / C0, 0.0]
    else:
        y0 = [mu0, 0.0]
    mu_min = 1.0 / lam_stop

    def ev(t, y):
        return y[0] - mu_min

    ev.terminal = True
    ev.direction = -1
    # bound the step so the uniform output grid is reached without overshoot surprises
    sol = solve_ivp(f, (0.0, T_end), y0, method="RK45", rtol=rtol, atol=atol, events=ev,
                    dense_output=True)
    if sol.status == -1:
        raise StepUnderflow(f"integration failed: {sol.message}", float(sol.t[-1]), sol.y[:, -1])
    t_stop = float(sol.t[-1])
    blew = sol.status == 1
    y_end = sol.y[:, -1]

    def mu_dot_of(y):
        return y[1] if model.variant == "geodesic" else -(e0 - y[1]) / C0

    if blew:
        T_star = t_stop + y_end[0] / abs(mu_dot_of(y_end))
    else:
        T_star = math.inf
    if dt_out is not None:
        m = int(math.floor(t_stop / dt_out + 1e-9))
        tu = dt_out * np.arange(m + 1)
    else:
        tu = np.linspace(0.0, t_stop, n_uniform)
    times = [tu]
    if blew:
        gaps = np.geomspace(max(T_star, 1e-300), max(T_star - t_stop, 1e-300), n_tail)
        tail = T_star - gaps
        times.append(tail[(tail > 0) & (tail < t_stop)])
    times.append([t_stop])
    t = np.unique(np.clip(np.concatenate(times), 0.0, t_stop))
    Y = sol.sol(t)
    Y[:, -1] = y_end
    mu = Y[0]
    mu_dot = Y[1] if model.variant == "geodesic" else -(e0 - Y[1]) / C0
    memory = np.zeros_like(mu) if model.variant == "geodesic" else Y[1]
    lam = 1.0 / mu
    lam_dot = -mu_dot / (mu * mu)
    return OdeSolution(t, lam, lam_dot, memory, T_star, "blowup" if blew else "completed", model,
                       solver_t=sol.t)


# ---------------------------------------------------------------------------
# phase and rate analysis
# ---------------------------------------------------------------------------
class SeriesTooShort(ValueError):
    pass


def self_similar_phase_check(t, lam, lam_dot, C0: float, eps0: float) -> dict:
    """Onset of the final monotone increase of ``lam_dot^4 / lam^7`` versus ``4 C0 / eps0``."""
    t = np.asarray(t, dtype=float)
    lam = np.asarray(lam, dtype=float)
    lam_dot = np.asarray(lam_dot, dtype=float)
    if t.size < 3:
        raise SeriesTooShort("need at least 3 samples")
    q = lam_dot**4 / lam**7
    dq = np.diff(q)
    bound = 4.0 * C0 / eps0 if eps0 > 0 else math.inf
    # strict increase relative to the local size, so round-off jitter is not an onset
    inc = dq > 1e-12 * np.maximum(np.abs(q[1:]), 1e-300)
    if not inc[-1]:
        return {"onset": None, "present": False, "bound": bound, "before_bound": False}
    j = inc.size - 1
    while j > 0 and inc[j - 1]:
        j -= 1
    onset = float(t[j])
    return {"onset": onset, "present": True, "bound": bound, "before_bound": onset < bound}


class InsufficientDynamicRange(ValueError):
    pass


@dataclass
class RateFit:
    T_star: float
    model: str
    residual: float
    amplitude: float
    residual_per_decade: list
    ratio: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)


def _shape(model: str, s):
    if model == "pure-self-similar":
        return s
    return s / np.sqrt(np.abs(np.log(s)))


def fit_rate(t, lam, model: str = "log-modified", min_decades: float = 3.0) -> RateFit:
    """Fit ``1/lam = A f(T - t)`` in log space, with ``f(s) = s`` or ``s / sqrt|ln s|``.

    ``T`` is seeded by a straight-line fit of ``1/lam`` over the last decade
    of ``lam`` and refined by nonlinear least squares over ``(T, ln A)``.
    """
    if model not in ("pure-self-similar", "log-modified"):
        raise ValueError(f"unknown rate model {model!r}")
    t = np.asarray(t, dtype=float)
    lam = np.asarray(lam, dtype=float)
    ok = np.isfinite(t) & np.isfinite(lam) & (lam > 0)
    t, lam = t[ok], lam[ok]
    if t.size < 5 or math.log10(lam.max() / lam.min()) < min_decades:
        span = math.log10(lam.max() / lam.min()) if t.size and lam.min() > 0 else 0.0
        raise InsufficientDynamicRange(f"lambda spans {span:.2f} decades; need {min_decades}")
    mu = 1.0 / lam
    last = lam >= lam.max() / 10.0
    if last.sum() >= 2:
        slope, icpt = np.polyfit(t[last], mu[last], 1)
        T0 = -icpt / slope if slope < 0 else t[-1] + (t[-1] - t[0]) * 1e-3
    else:
        T0 = t[-1] + (t[-1] - t[0]) * 1e-3
    t_last = t.max()
    eps_T = 1e-12 * max(1.0, abs(t_last))
    T0 = max(T0, t_last + eps_T * 10)
    if model == "log-modified" and T0 - t.min() >= 1.0:
        # the log form only makes sense for T - t < 1; keep the samples inside that window
        keep = T0 - t < 0.9
        t, lam, mu = t[keep], lam[keep], mu[keep]
        if t.size < 5 or math.log10(lam.max() / lam.min()) < min_decades:
            raise InsufficientDynamicRange(
                "too little dynamic range left inside T - t < 1 for the log-modified model")

    def resid(x):
        T, lnA = x
        s = T - t
        if np.any(s <= 0):
            return np.full(t.size, 1e3)
        f = _shape(model, s)
        if model == "log-modified" and np.any(s >= 1.0):
            # outside the model's domain; push back smoothly
            return np.where(s >= 1.0, 1e3 * (1 + s), np.log(mu) - lnA - np.log(np.abs(f)))
        return np.log(mu) - lnA - np.log(f)

    def best_lnA(T):
        s = T - t
        f = _shape(model, s)
        return float(np.mean(np.log(mu) - np.log(np.abs(f))))

    if model == "log-modified":
        upper = t.min() + 1.0 - 1e-12
        T0 = min(T0, upper - 1e-9)
        bounds = ([t_last + eps_T, -np.inf], [upper, np.inf])
    else:
        bounds = ([t_last + eps_T, -np.inf], [np.inf, np.inf])
    x0 = [T0, best_lnA(T0)]
    sol = least_squares(resid, x0, bounds=bounds, x_scale="jac", xtol=1e-15, ftol=1e-15,
                        gtol=1e-15, max_nfev=2000)
    T, lnA = sol.x
    r = resid(sol.x)
    rms = float(np.sqrt(np.mean(r * r)))
    dec = np.floor(np.log10(lam / lam.min())).astype(int)
    per_dec = []
    for d in np.unique(dec):
        m = dec == d
        per_dec.append({"decade": int(d), "lam_min": float(lam[m].min()), "lam_max": float(lam[m].max()),
                        "rms": float(np.sqrt(np.mean(r[m] ** 2))), "n": int(m.sum())})
    ratio = lam * _shape(model, np.maximum(T - t, 1e-300))
    return RateFit(float(T), model, rms, float(math.exp(lnA)), per_dec, ratio, t)


# ---------------------------------------------------------------------------
# coupling to simulation traces
# ---------------------------------------------------------------------------
class FitDegenerate(ValueError):
    pass


@dataclass
class Coupling:
    model: OdeModel
    kappa: float
    flags: list
    deviation: float
    relative_deviation: float
    window: tuple
    t: np.ndarray = field(repr=False)
    lam_model: np.ndarray = field(repr=False)
    lam_trace: np.ndarray = field(repr=False)


def couple_from_trace(t, lam, lam_dot, calE, eps: float, C0: float, t_window: float | None = None,
                      strict: bool = False, degenerate_tol: float = 1e-12) -> Coupling:
    """Build the refined model from a simulation trace and measure the disagreement.

    ``eps0 = eps / pi``; ``kappa`` is the least-squares slope of ``calE``
    against ``lam_dot^4 / lam^7``.  A vanishing ``calE`` column gives
    ``kappa = 0`` with the ``fit-degenerate`` flag (an error when ``strict``).
    """
    t = np.asarray(t, dtype=float)
    lam = np.asarray(lam, dtype=float)
    lam_dot = np.asarray(lam_dot, dtype=float)
    calE = np.asarray(calE, dtype=float)
    ok = np.isfinite(t) & np.isfinite(lam) & np.isfinite(lam_dot) & np.isfinite(calE)
    if t_window is not None:
        ok &= t <= t_window
    t, lam, lam_dot, calE = t[ok], lam[ok], lam_dot[ok], calE[ok]
    if t.size < 2:
        raise SeriesTooShort("trace window has fewer than 2 usable rows")
    flags = []
    q = lam_dot**4 / lam**7
    qq = float(np.dot(q, q))
    scale = max(float(np.max(np.abs(calE))), 0.0)
    if qq == 0.0 or scale <= degenerate_tol:
        if strict:
            raise FitDegenerate("calE column is numerically zero; kappa is not identifiable")
        kappa = 0.0
        flags.append("fit-degenerate")
    else:
        kappa = float(np.dot(calE, q) / qq)
    if kappa < 0:
        flags.append("kappa-negative")
    eps0 = eps / math.pi
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = OdeModel("refined", C0, eps0, kappa)
    if eps0 == 0.0:
        lam_model = np.ones_like(t)
    else:
        lam_model = _lam_at(model, t)
    dev = float(np.max(np.abs(lam_model - lam)))
    growth = float(np.max(np.abs(lam - 1.0)))
    rel = dev / growth if growth > 0 else (0.0 if dev == 0 else math.inf)
    return Coupling(model, kappa, flags, dev, rel, (float(t.min()), float(t.max())), t, lam_model, lam)


def _lam_at(model: OdeModel, t: np.ndarray) -> np.ndarray:
    f = _rhs(model)
    y0 = [1.0 / model.lam0, 0.0]
    T = float(t.max())
    if T <= 0:
        return np.full(t.shape, model.lam0)
    sol = solve_ivp(f, (0.0, T), y0, method="RK45", rtol=1e-10, atol=1e-14, t_eval=np.sort(t),
                    dense_output=False)
    out = np.empty_like(t)
    order = np.argsort(t)
    out[order] = 1.0 / sol.y[0]
    return out
