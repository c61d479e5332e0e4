import math

import numpy as np
import pytest
from scipy.special import beta

from sigma_collapse.functionals import (
    DivergentIntegrand,
    FieldState,
    GridTooCoarse,
    OrthogonalityViolation,
    QuadratureFailure,
    QuadratureScheme,
    SmallnessViolation,
    bogomolny_defect,
    compute_constants,
    cstar_identities,
    energy,
    ground_state_norm,
    h21_norm,
    heuristic_constant,
    inner_product,
    make_initial_data,
    orbital_energy,
    orthogonal_perturbation,
    topological_energy,
)
from sigma_collapse.grid import RadialGrid
from sigma_collapse.profiles import SolitonProfile, w0_coefficient


def beta_C0(k):
    # int 4k^2 x^{2k+1} / (1 + x^{2k})^2 dx = 2k B(1 + 1/k, 1 - 1/k)
    return 2 * k * beta(1 + 1 / k, 1 - 1 / k)


def beta_JJr2(k):
    return 2 * k * beta(1 + 2 / k, 1 - 2 / k)


class TestQuadrature:
    @pytest.mark.parametrize("k", range(2, 9))
    def test_C0_matches_beta_and_sine_forms(self, k):
        C0, err = ground_state_norm(k)
        assert C0 == pytest.approx(2 * math.pi / math.sin(math.pi / k), rel=1e-10)
        assert C0 == pytest.approx(beta_C0(k), rel=1e-10)
        assert err <= max(1e-14, 1e-12 * C0) * 10

    @pytest.mark.parametrize("k", range(3, 9))
    def test_JJr2(self, k):
        c = compute_constants(k)
        assert c.JJr2 == pytest.approx(4 * math.pi / math.sin(2 * math.pi / k), rel=1e-10)
        assert c.JJr2 == pytest.approx(beta_JJr2(k), rel=1e-10)

    def test_zero_function(self):
        assert inner_product(SolitonProfile(4).J, lambda r: 0.0) == 0.0

    def test_r3_weight(self):
        J = SolitonProfile(4).J
        assert inner_product(J, J, "r3dr") == pytest.approx(4 * math.pi, rel=1e-10)

    def test_bad_weight(self):
        with pytest.raises(ValueError):
            inner_product(math.sin, math.sin, "r7dr")

    def test_failure_reports_partial(self):
        scheme = QuadratureScheme(limit=2, rel_tol=1e-13, abs_tol=0.0)
        with pytest.raises(QuadratureFailure) as info:
            inner_product(lambda r: math.sin(50 * r) / (1 + r * r), lambda r: 1.0, "dr", scheme)
        assert math.isfinite(info.value.value)

    def test_k2_constants_diverge(self):
        with pytest.raises(QuadratureFailure):
            compute_constants(2)


class TestConstants:
    def test_k4_values(self):
        c = compute_constants(4)
        assert c.a == pytest.approx(-1 / (2 * math.sqrt(2)), rel=1e-12)
        assert c.b == 0.25
        assert c.E_soliton == pytest.approx(16 * math.pi)
        assert abs(c.Cstar) <= 1e-6 * (abs(c.T1) + abs(c.T2) + abs(c.T3))
        assert w0_coefficient(4) == c.a

    @pytest.mark.parametrize("k", range(4, 9))
    def test_identities(self, k):
        for name, (lhs, rhs) in cstar_identities(k).items():
            assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-12), name

    def test_w0_orthogonal_to_J(self):
        c = compute_constants(4)
        p = SolitonProfile(4)
        val = inner_product(lambda r: p.w0(1.0, r, c.a), p.J)
        assert abs(val) < 1e-10

    def test_heuristic_constant_magnitude(self):
        assert heuristic_constant(4) == pytest.approx(math.pi * 2 * math.pi / math.sin(math.pi / 4))


class TestEnergies:
    def test_soliton_energy(self, default_grid):
        s = make_initial_data(4, 0.0, 0, 0, default_grid)
        assert energy(s) == pytest.approx(16 * math.pi, rel=1e-6)
        assert abs(bogomolny_defect(s)) < 1e-8

    def test_rescaled_soliton_energy(self, default_grid):
        p = SolitonProfile(4, 3.0)
        s = FieldState(0.0, p.I(default_grid.r), np.zeros(default_grid.n), default_grid, 4)
        # discretisation error grows like (lam h)^2
        assert energy(s) == pytest.approx(16 * math.pi, rel=1e-5)

    def test_vacuum(self, small_grid):
        z = np.zeros(small_grid.n)
        s = FieldState(0.0, z, z, small_grid, 4)
        assert energy(s) == 0.0 and bogomolny_defect(s) == 0.0 and topological_energy(s) == 0.0

    def test_defect_identity_perturbed(self, default_grid):
        g = default_grid
        u0 = orthogonal_perturbation(4, 0.1, 1.0, g)
        s = make_initial_data(4, 0.1, u0, 0.01 * np.exp(-g.r**2) * g.r**4, g)
        e, d = energy(s), bogomolny_defect(s)
        assert d > 0
        # holds up to the O(h^2) mismatch between face and cell quadratures
        assert d == pytest.approx(e - topological_energy(s), abs=3e-5)
        assert topological_energy(s) == pytest.approx(16 * math.pi, rel=1e-12)

    def test_kinetic_excess(self, default_grid):
        s = make_initial_data(4, 0.1, 0, 0, default_grid)
        static = make_initial_data(4, 0.0, 0, 0, default_grid)
        kin = math.pi * default_grid.inner(s.pi, s.pi)
        assert energy(s) - energy(static) == pytest.approx(kin, rel=1e-9)
        assert energy(s) - 16 * math.pi == pytest.approx(kin, rel=0.05)

    def test_grid_too_coarse(self):
        g = RadialGrid.uniform(50, 20.0)
        p = SolitonProfile(4, 20.0)
        s = FieldState(0.0, p.I(g.r), np.zeros(g.n), g, 4)
        with pytest.raises(GridTooCoarse):
            energy(s)


class TestOrbitalAndNorms:
    def test_orbital_examples(self, default_grid):
        g = default_grid
        z = np.zeros(g.n)
        assert orbital_energy(z, z, 4, g) == 0.0
        C0 = 2 * math.pi / math.sin(math.pi / 4)
        J = SolitonProfile(4).J(g.r)
        e = orbital_energy(z, (0.1 / math.pi) / C0 * J, 4, g)
        assert e == pytest.approx(0.01 / (2 * math.pi**2 * C0), rel=1e-5)
        assert e == pytest.approx(5.701e-5, rel=1e-3)
        e2 = orbital_energy(1e-3 * g.r**2 * J, z, 4, g)
        assert 0 < e2 < math.inf

    def test_h21(self, default_grid):
        g = default_grid
        J = SolitonProfile(4).J
        assert h21_norm(0.0, 0.0, g) == 0.0
        assert 0 < h21_norm(0.0, J, g) < math.inf
        assert 0 < h21_norm(J, 0.0, g) < math.inf
        with pytest.raises(DivergentIntegrand):
            h21_norm(lambda r: r * np.exp(-r), 0.0, g)


class TestInitialData:
    def test_velocity_at_one(self, default_grid):
        g = default_grid
        s = make_initial_data(4, 0.1, 0, 0, g)
        i = np.argmin(np.abs(g.r - 1.0))
        expect = (0.1 / math.pi) / (2 * math.sqrt(2) * math.pi) * SolitonProfile(4).J(g.r[i])
        assert s.pi[i] == pytest.approx(expect, rel=1e-12)
        assert expect == pytest.approx(1.4328950534e-2, rel=1e-9)

    def test_eps_zero_static(self, small_grid):
        s = make_initial_data(4, 0.0, 0, 0, small_grid)
        assert np.all(s.pi == 0)

    def test_orthogonality_violation(self, small_grid):
        with pytest.raises(OrthogonalityViolation) as info:
            make_initial_data(4, 0.1, SolitonProfile(4).J, 0, small_grid)
        assert info.value.measured > 0

    def test_smallness_violation(self, default_grid):
        u0 = orthogonal_perturbation(4, 0.1, 1.0, default_grid, fraction=2.0)
        with pytest.raises(SmallnessViolation):
            make_initial_data(4, 0.1, u0, 0, default_grid, c0=1.0)
        make_initial_data(4, 0.1, u0 / 4, 0, default_grid, c0=1.0)

    def test_orthogonal_perturbation_orthogonal_and_sized(self, default_grid):
        g = default_grid
        u0 = orthogonal_perturbation(4, 0.1, 0.2, g)
        J = SolitonProfile(4).J(g.r)
        assert abs(g.inner(u0, J)) < 1e-14
        assert math.sqrt(h21_norm(u0, 0, g)) == pytest.approx(0.5 * 0.2 * 0.1, rel=1e-12)
