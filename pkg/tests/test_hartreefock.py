"""Hartree-Fock flow, scenarios, and semiclassical commutator diagnostics."""

import numpy as np
import pytest

import fermidyn.fock as fk
from fermidyn.onebody import CapacityError, Potential, build_basis, trace_norm
from fermidyn.hartreefock import (
    commutator_diagnostics,
    estimate_constants,
    evolve_hf,
    hf_energy,
    hf_rhs,
    IntegrationError,
    make_rhs,
    propagation_bound,
    scenario_fermi_ball,
    scenario_trapped,
)

RNG = np.random.default_rng(11)

COS_WELL = Potential([{"p": [1], "v": 0.25}, {"p": [2], "v": 0.15}], 1)
COS_POT = Potential([{"p": [1], "v": 0.25}], 1)
V0 = Potential(None, 1)


class TestRhs:
    def test_free_plane_wave_phase(self):
        basis = build_basis(1, 2, 1)
        c = np.zeros((basis.M, 1), dtype=complex)
        c[basis.mode_index(2), 0] = 1.0
        states = evolve_hf(basis, V0, c, [0.0, 0.3], tol=1e-12, dt_max=1e-3)
        got = states[1].orbitals.coeffs[basis.mode_index(2), 0]
        assert abs(got - np.exp(-1j * basis.hbar * 4 * 0.3)) < 1e-10

    def test_fermi_ball_rhs_keeps_omega(self):
        # h_HF commutes with the ball projection, so d/dt omega = 0
        basis, orbs = scenario_fermi_ball(1, 2.0, 4)
        c = orbs.coeffs
        dc = hf_rhs(basis, COS_POT, orbs)
        d_omega = dc @ c.conj().T + c @ dc.conj().T
        assert np.abs(d_omega).max() < 1e-13

    def test_single_orbital_cancellation(self):
        # direct and exchange cancel exactly for N = 1
        basis = build_basis(1, 3, 1)
        c = RNG.normal(size=(basis.M, 1)) + 1j * RNG.normal(size=(basis.M, 1))
        c /= np.linalg.norm(c)
        orbs = fk.OrbitalSet(c, basis)
        pot = Potential([{"p": [1], "v": 0.4}, {"p": [2], "v": -0.2}], 1)
        assert np.abs(hf_rhs(basis, pot, orbs) - hf_rhs(basis, V0, orbs)).max() < 1e-13


class TestEvolve:
    def test_diagonal_omega_is_stationary(self):
        basis, orbs = scenario_fermi_ball(1, 1.0, 3)
        states = evolve_hf(basis, V0, orbs.coeffs, [0.0, 0.7])
        assert trace_norm(states[1].omega - states[0].omega) < 1e-12

    def test_fermi_ball_stationary_under_even_potential(self):
        basis, orbs = scenario_fermi_ball(1, 2.0, 4)
        states = evolve_hf(basis, COS_POT, orbs.coeffs, [0.0, 1.0], tol=1e-9)
        assert trace_norm(states[1].omega - states[0].omega) < 1e-8

    def test_trapped_energy_and_projection(self):
        basis = build_basis(1, 4, 3)
        orbs = scenario_trapped(basis, 3, COS_WELL)
        states = evolve_hf(basis, COS_POT, orbs.coeffs, [0.0, 0.25, 0.5], tol=1e-9)
        assert abs(states[-1].energy - states[0].energy) < 1e-8
        assert states[-1].projection_defect < 1e-8
        # step-size cross-check: halved cap changes omega below 10x tolerance
        finer = evolve_hf(
            basis, COS_POT, orbs.coeffs, [0.0, 0.25, 0.5], tol=1e-9, dt_max=0.005 * basis.hbar
        )
        assert np.abs(finer[-1].omega - states[-1].omega).max() < 1e-8

    def test_gauge_covariance(self):
        basis = build_basis(1, 4, 3)
        orbs = scenario_trapped(basis, 3, COS_WELL)
        c2 = orbs.coeffs.copy()
        c2[:, 1] *= np.exp(1j * 1.234)
        t_out = [0.0, 0.4]
        a = evolve_hf(basis, COS_POT, orbs.coeffs, t_out, tol=1e-10)
        b = evolve_hf(basis, COS_POT, c2, t_out, tol=1e-10)
        assert np.abs(a[1].omega - b[1].omega).max() < 1e-10
        assert abs(a[1].energy - b[1].energy) < 1e-10
        da = commutator_diagnostics(basis, a[1].omega, 2)
        db = commutator_diagnostics(basis, b[1].omega, 2)
        assert abs(da.trX - db.trX) < 1e-10
        assert abs(da.trP - db.trP) < 1e-10

    def test_step_underflow_raises(self):
        basis = build_basis(1, 2, 2)
        orbs = scenario_trapped(basis, 2, COS_WELL)
        with pytest.raises(IntegrationError):
            evolve_hf(basis, COS_POT, orbs.coeffs, [0.0, 0.1], tol=1e-30)

    def test_energy_functional_value(self):
        # free energy of the ball is the direct kinetic sum
        basis, orbs = scenario_fermi_ball(1, 2.0, 4)
        assert hf_energy(basis, V0, orbs.omega()) == pytest.approx(
            basis.hbar**2 * 10, rel=1e-14
        )


class TestDiagnostics:
    def test_fermi_ball_trp_zero(self):
        basis, orbs = scenario_fermi_ball(1, 2.0, 4)
        d = commutator_diagnostics(basis, orbs.omega(), 2)
        assert d.trP == 0.0

    def test_fermi_ball_trx_values(self):
        # alpha=1 gives ||[T,omega]||_tr = 2, contribution 2/(1+1) = 1
        basis, orbs = scenario_fermi_ball(1, 2.0, 4)
        d1 = commutator_diagnostics(basis, orbs.omega(), 1)
        assert d1.trX == pytest.approx(1.0, abs=1e-12)
        # alpha=2 gives 4/(1+2), which dominates
        d2 = commutator_diagnostics(basis, orbs.omega(), 2)
        assert d2.trX == pytest.approx(4.0 / 3.0, abs=1e-12)
        assert not d1.truncation_flag

    def test_truncation_flag_fires_near_boundary(self):
        basis, orbs = scenario_fermi_ball(1, 2.0, 3)
        d = commutator_diagnostics(basis, orbs.omega(), 2)
        assert d.truncation_flag  # ball touches the shell one step inside K=3

    def test_scaled_ratios_stay_bounded_in_n(self):
        # the semiclassical structure: trX/(N hbar) and trP/(N hbar) do not grow
        ratios = []
        for n in (4, 8, 16):
            basis = build_basis(1, 12, n)
            orbs = scenario_trapped(basis, n, COS_WELL)
            d = commutator_diagnostics(basis, orbs.omega(), 2)
            ratios.append((d.trX / (n * basis.hbar), d.trP / (n * basis.hbar)))
        assert ratios[2][0] <= ratios[0][0] * 1.5
        assert ratios[2][1] <= ratios[0][1] * 1.5

    def test_estimate_constants_fermi_family(self):
        members = []
        for k_f in (1.0, 2.0, 3.0):
            basis, orbs = scenario_fermi_ball(1, k_f, int(k_f) + 3)
            members.append((basis, commutator_diagnostics(basis, orbs.omega(), 2)))
        c_x, c_p = estimate_constants(members)
        assert c_p == 0.0
        # N hbar = 1 in d=1, and max_alpha 2|alpha|/(1+|alpha|) = 4/3 independent of k_F
        assert c_x == pytest.approx(4.0 / 3.0, abs=1e-12)

    def test_single_member_constants(self):
        basis, orbs = scenario_fermi_ball(1, 2.0, 4)
        d = commutator_diagnostics(basis, orbs.omega(), 2)
        c_x, c_p = estimate_constants([(basis, d)])
        assert c_x == pytest.approx(d.trX / (basis.N * basis.hbar))
        assert c_p == pytest.approx(d.trP / (basis.N * basis.hbar))

    def test_estimate_constants_empty(self):
        with pytest.raises(ValueError):
            estimate_constants([])

    def test_propagation_bound_monotone(self):
        b0 = propagation_bound(3, 1 / 3, 1.0, 0.5, 2.0, 0.0)
        b1 = propagation_bound(3, 1 / 3, 1.0, 0.5, 2.0, 0.5)
        assert b0 == pytest.approx(1.5)
        assert b1 == pytest.approx(1.5 * np.exp(2.0))

    def test_propagation_inequality_along_flow(self):
        basis = build_basis(1, 4, 3)
        orbs = scenario_trapped(basis, 3, COS_WELL)
        times = [0.1 * i for i in range(6)]
        states = evolve_hf(basis, COS_POT, orbs.coeffs, times, tol=1e-9)
        d0 = commutator_diagnostics(basis, states[0].omega, 2)
        c_x, c_p = estimate_constants([(basis, d0)])
        for st in states:
            d = commutator_diagnostics(basis, st.omega, 2)
            bound = propagation_bound(basis.N, basis.hbar, c_x, c_p, COS_POT.q0, st.t)
            assert d.trX <= bound
            assert d.trP <= bound


class TestScenarios:
    def test_fermi_ball_counts(self):
        basis, _ = scenario_fermi_ball(1, 2.0, 4)
        assert basis.N == 5
        basis2, _ = scenario_fermi_ball(2, 1.0, 3)
        assert basis2.N == 5  # (0,0) and the four unit vectors

    def test_fermi_ball_kinetic_anchor(self):
        basis, orbs = scenario_fermi_ball(1, 2.0, 4)
        ek = np.real(
            np.trace(
                np.diag(basis.hbar**2 * (basis.modes[:, 0].astype(float) ** 2))
                @ orbs.omega()
            )
        )
        assert ek == pytest.approx(basis.hbar**2 * sum(k**2 for k in range(-2, 3)), rel=1e-14)

    def test_fermi_ball_capacity(self):
        with pytest.raises(CapacityError):
            scenario_fermi_ball(1, 3.0, 2)

    def test_trapped_free_tiebreak(self):
        basis = build_basis(1, 3, 2)
        orbs = scenario_trapped(basis, 2, V0)
        dominant = [tuple(basis.modes[np.argmax(np.abs(orbs.coeffs[:, j]))]) for j in range(2)]
        assert dominant == [(0,), (-1,)]

    def test_trapped_cosine_well(self):
        basis = build_basis(1, 3, 2)
        orbs = scenario_trapped(basis, 2, Potential([{"p": [1], "v": 1.0}], 1))
        om = orbs.omega()
        assert np.abs(om @ om - om).max() < 1e-10
        assert orbs.gram_defect() < 1e-10

    def test_trapped_eigenvalue_ordering(self):
        basis = build_basis(1, 3, 3)
        h = np.diag(basis.hbar**2 * basis.modes[:, 0].astype(float) ** 2)
        for p, v in COS_WELL.coefficients.items():
            for j, k in enumerate(basis.modes[:, 0]):
                tgt = basis.mode_index(k + p[0])
                if tgt >= 0:
                    h[tgt, j] += v
        vals = np.linalg.eigvalsh(h)
        assert np.all(np.diff(vals) >= -1e-14)

    def test_trapped_degenerate_warning(self):
        basis = build_basis(1, 3, 2)
        with pytest.warns(RuntimeWarning):
            scenario_trapped(basis, 2, V0)  # +-1 doublet is exactly degenerate

    def test_trapped_capacity(self):
        basis = build_basis(1, 1, 3)
        with pytest.raises(CapacityError):
            scenario_trapped(basis, 4, V0)


def test_rhs_matches_finite_difference_of_flow():
    # consistency of make_rhs with the integrator's own trajectory
    basis = build_basis(1, 3, 2)
    orbs = scenario_trapped(basis, 2, COS_WELL)
    rhs = make_rhs(basis, COS_POT)
    eps = 1e-6
    states = evolve_hf(basis, COS_POT, orbs.coeffs, [0.1 - eps, 0.1 + eps], tol=1e-12, dt_max=1e-3)
    fd = (states[1].orbitals.coeffs - states[0].orbitals.coeffs) / (2 * eps)
    assert np.abs(fd - rhs(0.5 * (states[0].orbitals.coeffs + states[1].orbitals.coeffs))).max() < 1e-6
