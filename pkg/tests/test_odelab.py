import math
import warnings

import numpy as np
import pytest

from sigma_collapse.odelab import (
    FitDegenerate,
    InsufficientDynamicRange,
    OdeModel,
    SeriesTooShort,
    couple_from_trace,
    fit_rate,
    self_similar_phase_check,
    solve_ode,
)

C0 = 2 * math.pi / math.sin(math.pi / 4)
EPS0 = 0.1 / math.pi


@pytest.mark.parametrize("variant", ["riccati", "geodesic"])
def test_closed_form(variant):
    sol = solve_ode(OdeModel(variant, C0, EPS0))
    assert sol.status == "blowup"
    # compare mu = 1/lam: the closed form for lam itself cancels catastrophically near T*
    mu = 1.0 - EPS0 * sol.t / C0
    assert np.max(np.abs(1.0 / sol.lam - mu)) < 1e-12
    m = sol.lam < 1e6
    assert np.max(np.abs(sol.lam[m] * mu[m] - 1)) < 1e-8
    assert sol.T_star == pytest.approx(C0 / EPS0, rel=1e-10)
    assert np.all(np.diff(sol.lam) > 0)


def test_constant_E_hook():
    cE = 1e-5
    sol = solve_ode(OdeModel("refined", C0, EPS0, constant_E=cE), T_end=200.0)
    t = sol.t
    mu = 1.0 - (EPS0 * t - 0.5 * cE * t**2) / C0
    assert np.max(np.abs(1.0 / sol.lam - mu)) < 1e-8
    assert np.allclose(sol.memory, cE * t, rtol=1e-8, atol=1e-14)


def test_memory_delays_blowup():
    Ts = [solve_ode(OdeModel("refined", C0, EPS0, kappa=k)).T_star for k in (0.0, 10.0, 100.0, 1000.0)]
    assert all(b > a for a, b in zip(Ts, Ts[1:]))
    assert Ts[0] == pytest.approx(C0 / EPS0, rel=1e-10)


def test_static_when_eps_zero():
    sol = solve_ode(OdeModel("riccati", C0, 0.0), T_end=10.0)
    assert sol.status == "completed" and sol.T_star == math.inf
    assert np.all(sol.lam == 1.0)


def test_model_validation():
    with pytest.raises(ValueError):
        OdeModel("quartic", C0, EPS0)
    with pytest.raises(ValueError):
        OdeModel("riccati", -1.0, EPS0)
    with pytest.warns(UserWarning):
        OdeModel("refined", C0, EPS0, kappa=-1.0)


def test_dt_out_grid():
    sol = solve_ode(OdeModel("riccati", C0, EPS0), dt_out=1.0)
    assert np.any(np.isclose(sol.t, 5.0, atol=0, rtol=1e-15))
    assert sol.t[-1] < sol.T_star


class TestPhase:
    def test_riccati_phase(self):
        sol = solve_ode(OdeModel("riccati", C0, EPS0))
        res = self_similar_phase_check(sol.t, sol.lam, sol.lam_dot, C0, EPS0)
        assert res["present"] and res["before_bound"]
        assert res["bound"] == pytest.approx(4 * C0 / EPS0)

    def test_absent_when_decreasing(self):
        t = np.linspace(0, 1, 10)
        res = self_similar_phase_check(t, np.ones(10), np.linspace(1, 0.1, 10), C0, EPS0)
        assert not res["present"] and res["onset"] is None

    def test_short(self):
        with pytest.raises(SeriesTooShort):
            self_similar_phase_check([0, 1], [1, 1], [0, 0], C0, EPS0)


class TestFitRate:
    def test_pure(self):
        t = 5.0 - np.geomspace(1.0, 1e-5, 200)
        fit = fit_rate(t, 1.0 / (0.3 * (5.0 - t)), "pure-self-similar")
        assert fit.T_star == pytest.approx(5.0, abs=1e-10)
        assert fit.amplitude == pytest.approx(0.3, rel=1e-8)

    def test_log_modified(self):
        T = 2.0
        s = np.geomspace(0.5, 1e-7, 300)
        t = T - s
        lam = np.sqrt(-np.log(s)) / (0.7 * s)
        fit = fit_rate(t, lam, "log-modified")
        assert fit.T_star == pytest.approx(T, abs=1e-10)
        assert np.allclose(fit.ratio / fit.ratio[0], 1.0, atol=1e-7)

    def test_insufficient_range(self):
        t = np.linspace(0, 1, 20)
        with pytest.raises(InsufficientDynamicRange):
            fit_rate(t, 1 + t)

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            fit_rate([0, 1], [1, 2], "cubic")


class TestCouple:
    def test_degenerate(self):
        t = np.linspace(0, 10, 50)
        lam = 1.0 / (1.0 - EPS0 * t / C0)
        lam_dot = (EPS0 / C0) * lam**2
        c = couple_from_trace(t, lam, lam_dot, np.zeros_like(t), 0.1, C0)
        assert c.kappa == 0.0 and "fit-degenerate" in c.flags
        assert c.relative_deviation < 1e-8
        with pytest.raises(FitDegenerate):
            couple_from_trace(t, lam, lam_dot, np.zeros_like(t), 0.1, C0, strict=True)

    def test_static(self):
        t = np.linspace(0, 5, 20)
        c = couple_from_trace(t, np.ones_like(t), np.zeros_like(t), np.zeros_like(t), 0.0, C0)
        assert c.deviation == 0.0 and c.relative_deviation == 0.0

    def test_negative_flag_and_slope(self):
        t = np.linspace(0, 10, 50)
        lam = 1.0 / (1.0 - EPS0 * t / C0)
        lam_dot = (EPS0 / C0) * lam**2
        q = lam_dot**4 / lam**7
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            c = couple_from_trace(t, lam, lam_dot, -3.0 * q, 0.1, C0)
        assert c.kappa == pytest.approx(-3.0)
        assert "kappa-negative" in c.flags

    def test_window(self):
        t = np.linspace(0, 10, 50)
        with pytest.raises(SeriesTooShort):
            couple_from_trace(t, np.ones_like(t), np.zeros_like(t), np.zeros_like(t), 0.1, C0, t_window=-1)
