import math

import numpy as np
import pytest

from sigma_collapse.evolve import (
    CflViolation,
    EvolveConfig,
    NaNDetected,
    PreconditionError,
    interpolate4,
    max_stable_dt,
    regrid,
    rhs,
    run,
    step,
)
from sigma_collapse.functionals import FieldState, energy, make_initial_data, topological_energy
from sigma_collapse.grid import RadialGrid
from sigma_collapse.profiles import SolitonProfile


@pytest.fixture(scope="module")
def grid():
    return RadialGrid.two_zone(1601, 0.005, 3.0, 30.0)


def perturbed(grid, eps=0.05):
    r = grid.r
    s = make_initial_data(4, eps, 0, 0, grid)
    s.phi = s.phi + 0.01 * r**4 * np.exp(-((r - 2.0) ** 2))
    return s


def test_rhs_vacuum_is_zero(grid):
    z = np.zeros(grid.n)
    assert np.all(rhs(FieldState(0.0, z, z, grid, 4)) == 0.0)


def test_rhs_soliton_second_order():
    res = []
    for n, h in [(2001, 0.004), (4001, 0.002)]:
        g = RadialGrid.two_zone(n, h, 4.0, 40.0)
        s = FieldState(0.0, SolitonProfile(4).I(g.r), np.zeros(g.n), g, 4)
        a = rhs(s)
        m = g.r < 5
        res.append(np.max(np.abs(a[m])))
    assert res[0] < 1e-3
    assert math.log2(res[0] / res[1]) > 1.8


def test_step_does_not_mutate(grid):
    s = perturbed(grid)
    phi = s.phi.copy()
    out = step(s, 0.5 * max_stable_dt(grid, 4), 3)
    assert np.array_equal(s.phi, phi)
    assert out.t == pytest.approx(1.5 * max_stable_dt(grid, 4))


def test_time_reversible(grid):
    s = perturbed(grid)
    dt = 0.5 * max_stable_dt(grid, 4)
    back = step(step(s, dt, 400), -dt, 400)
    assert np.max(np.abs(back.phi - s.phi)) < 1e-10
    assert np.max(np.abs(back.pi - s.pi)) < 1e-10


def test_energy_error_second_order_in_dt(grid):
    s = perturbed(grid)
    e0 = energy(s)
    dt = 0.5 * max_stable_dt(grid, 4)
    err1 = abs(energy(step(s, dt, 2000)) - e0)
    err2 = abs(energy(step(s, 0.5 * dt, 4000)) - e0)
    assert err1 < 1e-7 * e0
    assert math.log2(err1 / err2) > 1.9


def test_degree_conserved(grid):
    s = perturbed(grid)
    out = step(s, 0.5 * max_stable_dt(grid, 4), 1000)
    assert topological_energy(out) == topological_energy(s)


def test_cfl_violation(grid):
    s = perturbed(grid)
    with pytest.raises(CflViolation):
        step(s, 1.5 * max_stable_dt(grid, 4))


def test_nan_detected(grid):
    s = perturbed(grid)
    s.phi[100] = np.nan
    with pytest.raises(NaNDetected) as info:
        step(s, 0.1 * max_stable_dt(grid, 4))
    assert 95 <= info.value.node <= 100


def test_precondition(grid):
    with pytest.raises(PreconditionError):
        run(perturbed(grid), EvolveConfig(T_end=40.0))
    with pytest.raises(PreconditionError):
        run(perturbed(grid), EvolveConfig(T_end=20.0, support_radius=5.0, boundary_margin=6.0))


def test_finite_speed(grid):
    r = grid.r
    z = np.zeros(grid.n)
    phi = 0.01 * np.where(r < 3.0, (9.0 - r**2) ** 4 * r, 0.0) / 81**2
    s = FieldState(0.0, phi, z, grid, 4)
    out = step(s, 0.5 * max_stable_dt(grid, 4), int(round(2.0 / (0.5 * max_stable_dt(grid, 4)))))
    assert np.max(np.abs(out.phi[r > 8.0])) < 1e-12
    assert np.max(np.abs(out.phi[r < 5.0])) > 1e-4


def test_interpolate4_exact_on_odd_cubics():
    old = np.linspace(0.05, 4.95, 50)
    new = np.linspace(0.01, 4.9, 333)
    f = lambda x: x**3 - 2 * x
    assert np.allclose(interpolate4(old, f(old), new), f(new), atol=1e-12)


def test_regrid_halves_inner_spacing(grid):
    s = perturbed(grid)
    out = regrid(s)
    assert out.grid.h_in == pytest.approx(0.5 * grid.h_in)
    assert out.grid.r_max == pytest.approx(grid.r_max)
    assert energy(out) == pytest.approx(energy(s), rel=1e-5)


class TestRun:
    def test_completed_with_strides(self, grid):
        cfg = EvolveConfig(T_end=2.0, diag_dt=0.1, snapshot_stride=5)
        res = run(perturbed(grid), cfg)
        assert res.status == "completed"
        assert len(res.diagnostics) == 21
        assert [round(s.t, 12) for s in res.snapshots] == [0.0, 0.5, 1.0, 1.5, 2.0]
        e = [row["energy"] for row in res.diagnostics]
        assert max(e) - min(e) < 1e-7 * e[0]

    def test_resolution_exhausted(self, grid):
        s = FieldState(0.0, SolitonProfile(4, 3.0).I(grid.r), np.zeros(grid.n), grid, 4)
        cfg = EvolveConfig(T_end=1.0, gradient_cap_cells=1000.0)
        res = run(s, cfg)
        assert res.status == "resolution-exhausted"
        assert len(res.diagnostics) == 2

    def test_regrid_triggered(self, grid):
        s = FieldState(0.0, SolitonProfile(4, 8.0).I(grid.r), np.zeros(grid.n), grid, 4)
        cfg = EvolveConfig(T_end=0.2, regrid_depth=2, regrid_threshold=0.05, gradient_cap_cells=1.0)
        res = run(s, cfg)
        assert res.regrids and res.final.grid.h_in < grid.h_in
