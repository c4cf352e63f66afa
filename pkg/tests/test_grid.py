"""Grid-core tests: packets, propagator, hits, flows, norms.

Derived expectations are frozen from independent oracles: closed-form
Gaussian integrals (mpmath, 30 digits) and the analytic free-Gaussian
evolution.
"""

import numpy as np
import pytest

from collapsim import (
    CollapseSpec,
    DegenerateStateError,
    Grid,
    GridMismatchError,
    GridTooSmallError,
    HamiltonianSpec,
    InvalidParameterError,
    StepTooLargeError,
    WaveFunction,
    boundary_mass,
    collapse_flow,
    cosine_potential,
    evolve_unitary,
    gaussian_hit,
    inner,
    make_gaussian_packet,
    norm2,
    normalize,
    position_mean,
    schrodinger_step,
)

# closed-form Gaussian integrals, mpmath quad to 30 digits
FLOW_NORM2_ORACLE = 0.961111655728003535763819051508  # lam=1, dxi=0.3, dt=0.1, sigma=1
HIT_NORM2_ORACLE = 0.276649360675295267795539678571   # alpha=1, center=0.7, sigma=1


def packet(n=256, lo=-20.0, hi=20.0, center=0.0, sigma=1.0, k=0.0):
    return make_gaussian_packet(Grid(n, lo, hi), center, sigma, k)


def free_gaussian_exact(grid, sigma, k0, t):
    """Analytic free evolution of a centered Gaussian packet (hbar = m = 1)."""
    x = grid.x
    tau = 1.0 + 1j * t / (2.0 * sigma**2)
    return ((2.0 * np.pi * sigma**2) ** (-0.25) / np.sqrt(tau)
            * np.exp(-((x - k0 * t) ** 2) / (4.0 * sigma**2 * tau))
            * np.exp(1j * (k0 * x - 0.5 * k0**2 * t)))


class TestGrid:
    def test_grid_geometry(self):
        g = Grid(8, -1.0, 1.0)
        assert g.dx == pytest.approx(0.25)
        assert g.x[0] == -1.0 and g.x[-1] == pytest.approx(0.75)

    def test_grid_rejects_non_power_of_two(self):
        with pytest.raises(InvalidParameterError):
            Grid(100, -1.0, 1.0)
        with pytest.raises(InvalidParameterError):
            Grid(4, -1.0, 1.0)
        with pytest.raises(InvalidParameterError):
            Grid(16, 1.0, -1.0)


class TestPacket:
    def test_normalized_by_construction(self):
        phi = packet()
        assert norm2(phi) == pytest.approx(1.0, abs=1e-12)
        assert phi.label == "normalized"

    def test_symmetric_mean_zero(self):
        assert abs(position_mean(packet())) < 1e-10

    def test_offcenter_mean_by_quadrature(self):
        # oracle: direct quadrature of x |phi|^2 on the grid
        phi = packet(center=2.0, sigma=0.5, k=1.0)
        d = np.abs(phi.amplitudes) ** 2 * phi.grid.dx
        oracle = float((phi.grid.x * d).sum())
        assert oracle == pytest.approx(2.0, abs=1e-8)
        assert position_mean(phi) == pytest.approx(oracle, abs=1e-12)

    def test_bad_sigma(self):
        with pytest.raises(InvalidParameterError):
            packet(sigma=0.0)

    def test_grid_too_small(self):
        with pytest.raises(GridTooSmallError):
            make_gaussian_packet(Grid(64, -2.0, 2.0), 0.0, 1.0)


class TestSchrodingerStep:
    def test_zero_dt_identity(self):
        phi = packet()
        h = HamiltonianSpec.free(phi.grid)
        assert schrodinger_step(phi, h, 0.0) is phi

    def test_negative_dt(self):
        phi = packet()
        with pytest.raises(InvalidParameterError):
            schrodinger_step(phi, HamiltonianSpec.free(phi.grid), -0.1)

    def test_free_gaussian_oracle_100_steps(self):
        grid = Grid(512, -48.0, 48.0)
        sigma, k0 = 1.0, 0.4
        phi = make_gaussian_packet(grid, 0.0, sigma, k0)
        h = HamiltonianSpec.free(grid)
        state = phi
        for _ in range(100):
            state = schrodinger_step(state, h, 0.1)
        exact = free_gaussian_exact(grid, sigma, k0, 10.0)
        exact *= np.sqrt(norm2(phi))  # grid-normalization factor
        err = np.sqrt(np.sum(np.abs(state.amplitudes - exact) ** 2) * grid.dx)
        assert err < 1e-6

    def test_unitarity_with_potential(self):
        phi = packet()
        h = HamiltonianSpec(phi.grid, cosine_potential(phi.grid, 0.7))
        state = phi
        for _ in range(50):
            state = schrodinger_step(state, h, 0.01)
        assert abs(norm2(state) - 1.0) <= 1e-12

    def test_unitarity_random_states(self):
        rng = np.random.default_rng(3)
        g = Grid(64, -10.0, 10.0)
        h = HamiltonianSpec(g, cosine_potential(g, 0.3))
        for _ in range(5):
            amps = rng.standard_normal(64) + 1j * rng.standard_normal(64)
            psi = WaveFunction(g, amps)
            dt = rng.uniform(0.0, 0.1)
            out = schrodinger_step(psi, h, dt)
            assert abs(norm2(out) - norm2(psi)) <= 1e-10 * norm2(psi)

    def test_evolve_unitary_matches_composed_steps(self):
        phi = packet(n=128, lo=-16, hi=16)
        h = HamiltonianSpec(phi.grid, cosine_potential(phi.grid, 0.5))
        a = evolve_unitary(phi, h, 0.25, max_step=1.0 / 16.0)
        b = phi
        for _ in range(4):
            b = schrodinger_step(b, h, 0.25 / 4)
        assert np.max(np.abs(a.amplitudes - b.amplitudes)) < 1e-12

    def test_h_zero_is_identity(self):
        phi = packet()
        h = HamiltonianSpec.zero(phi.grid)
        out = evolve_unitary(phi, h, 5.0)
        assert out is phi


class TestGaussianHit:
    def test_disjoint_support_kills_mass(self):
        phi = packet()
        hit = gaussian_hit(phi, 1e4, 1.0)
        assert norm2(hit) < 1e-8
        assert hit.label == "raw"

    def test_norm2_closed_form(self):
        # |phi|^2 = N(0,1); hit at 0.7 with alpha=1 -> N(0.7; 0, 1 + 1/2)
        phi = packet()
        got = norm2(gaussian_hit(phi, 0.7, 1.0))
        assert got == pytest.approx(HIT_NORM2_ORACLE, rel=1e-10)
        # cross-check by grid quadrature of the smeared density
        x = phi.grid.x
        quad = float((np.sqrt(1.0 / np.pi) * np.exp(-(x - 0.7) ** 2)
                      * np.abs(phi.amplitudes) ** 2).sum() * phi.grid.dx)
        assert got == pytest.approx(quad, rel=1e-12)

    def test_hit_semigroup(self):
        phi = packet()
        twice = gaussian_hit(gaussian_hit(phi, 0.0, 1.0), 0.0, 1.0)
        single = phi.amplitudes * (1.0 / np.pi) ** 0.5 * np.exp(-phi.grid.x**2)
        assert np.max(np.abs(twice.amplitudes - single)) < 1e-14

    def test_bad_alpha(self):
        with pytest.raises(InvalidParameterError):
            gaussian_hit(packet(), 0.0, 0.0)


class TestCollapseFlow:
    def test_identity_flow(self):
        phi = packet()
        out = collapse_flow(phi, CollapseSpec(2.0), 0.0, 0.0)
        assert np.array_equal(out.amplitudes, phi.amplitudes)

    def test_composition_additive(self):
        phi = packet()
        c = CollapseSpec(1.0)
        one = collapse_flow(collapse_flow(phi, c, 0.3, 0.1), c, -0.7, 0.25)
        two = collapse_flow(phi, c, -0.4, 0.35)
        rel = np.max(np.abs(one.amplitudes - two.amplitudes)) / np.max(
            np.abs(two.amplitudes))
        assert rel <= 1e-12

    def test_commutes_with_hit(self):
        phi = packet()
        c = CollapseSpec(0.5)
        a = gaussian_hit(collapse_flow(phi, c, 0.2, 0.1), 0.4, 1.5)
        b = collapse_flow(gaussian_hit(phi, 0.4, 1.5), c, 0.2, 0.1)
        assert np.max(np.abs(a.amplitudes - b.amplitudes)) < 1e-14

    def test_norm2_quadrature_oracle(self):
        phi = packet()
        out = collapse_flow(phi, CollapseSpec(1.0), 0.3, 0.1)
        # independent quadrature of e^{2(0.3)x - 2(0.1)x^2} |phi_0|^2
        x = phi.grid.x
        quad = float((np.exp(0.6 * x - 0.2 * x**2)
                      * np.abs(phi.amplitudes) ** 2).sum() * phi.grid.dx)
        assert norm2(out) == pytest.approx(quad, rel=1e-13)
        assert norm2(out) == pytest.approx(FLOW_NORM2_ORACLE, rel=1e-10)

    def test_zero_collapse_limit(self):
        phi = packet()
        out = collapse_flow(phi, CollapseSpec(1e-12), 0.0, 1.0)
        assert abs(norm2(out) - 1.0) <= 1e-10

    def test_overflow_guard(self):
        phi = packet()
        with pytest.raises(StepTooLargeError):
            collapse_flow(phi, CollapseSpec(10.0), 0.0, 1.0)  # 10*400*1 > 700
        with pytest.raises(InvalidParameterError):
            collapse_flow(phi, CollapseSpec(1.0), 0.0, -0.1)


class TestNorms:
    def test_normalize_scale_invariance(self):
        phi = packet()
        doubled = WaveFunction(phi.grid, 2.0 * phi.amplitudes)
        a = normalize(doubled)
        b = normalize(phi)
        assert np.max(np.abs(a.amplitudes - b.amplitudes)) < 1e-14

    def test_inner_vs_norm2(self):
        phi = packet()
        assert inner(phi, phi).real == pytest.approx(norm2(phi), abs=1e-12)
        assert abs(inner(phi, phi).imag) < 1e-14

    def test_degenerate_normalize(self):
        g = Grid(16, -1.0, 1.0)
        with pytest.raises(DegenerateStateError):
            normalize(WaveFunction(g, np.zeros(16, dtype=complex)))

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatchError):
            inner(packet(), packet(n=128))

    def test_boundary_mass(self):
        phi = packet()
        assert boundary_mass(phi) < 1e-12
        edge = make_gaussian_packet(Grid(256, -20.0, 20.0), 18.6, 0.2)
        assert boundary_mass(edge) > 0.5
