"""Exact dynamics, fluctuation generator, and the inequality chain."""

import itertools
import math

import numpy as np
import pytest

import fermidyn.fock as fk
import fermidyn.slatercondon as sc
from fermidyn.onebody import CapacityError, Potential, build_basis, kinetic, translation
from fermidyn.hartreefock import evolve_hf, make_rhs, scenario_fermi_ball, scenario_trapped
from fermidyn.exactdyn import (
    build_hamiltonian,
    direct_number_derivative,
    evolve_exact,
    fluctuation_quartic_kernels,
    fluctuation_state,
    generator_block_decomposition,
    generator_matrix,
    number_growth_report,
    quartic_block_matrices,
    quartic_expectation,
    theorem_rhs,
    theorem_table,
    trace_distance_check,
)

RNG = np.random.default_rng(5)

COS_WELL = Potential([{"p": [1], "v": 0.25}, {"p": [2], "v": 0.15}], 1)
COS_POT = Potential([{"p": [1], "v": 0.25}], 1)
MIXED_POT = Potential([{"p": [1], "v": 0.3}, {"p": [2], "v": -0.15}, {"p": [0], "v": 0.2}], 1)
V0 = Potential(None, 1)


def tensor_oracle(basis, pot, n):
    """Third construction route: antisymmetrized n-fold tensor space.

    Builds sum_i h_i + (1/N) sum_{i<j} W_ij on (C^M)^(x n) and compresses it
    with the explicit wedge isometry; independent of both the bitstring
    machinery and the determinant rules.
    """
    m = basis.M
    h1 = kinetic(basis).mat
    w = np.zeros((m * m, m * m), dtype=complex)
    for p, v in pot.coefficients.items():
        if v == 0.0:
            continue
        tp = translation(basis, p).mat
        tm = translation(basis, tuple(-c for c in p)).mat
        w += v * np.kron(tp, tm)
    lam = 1.0 / basis.N
    dim_t = m**n
    idx = list(itertools.product(range(m), repeat=n))
    pos = {t: a for a, t in enumerate(idx)}
    h_t = np.zeros((dim_t, dim_t), dtype=complex)
    for i in range(n):
        ops = [np.eye(m, dtype=complex)] * n
        ops[i] = h1
        acc = ops[0]
        for o in ops[1:]:
            acc = np.kron(acc, o)
        h_t += acc
    w_full = w.reshape(m, m, m, m)
    for i in range(n):
        for j in range(i + 1, n):
            for a, t_in in enumerate(idx):
                col = w_full[:, :, t_in[i], t_in[j]]
                for xi, yj in zip(*np.nonzero(col)):
                    t_out = list(t_in)
                    t_out[i], t_out[j] = xi, yj
                    h_t[pos[tuple(t_out)], a] += lam * col[xi, yj]
    states = sc.sector_states(m, n)
    iso = np.zeros((dim_t, len(states)), dtype=complex)
    norm = 1.0 / math.sqrt(math.factorial(n))
    for col_i, s in enumerate(states):
        occ = [j for j in range(m) if s >> j & 1]
        for perm in itertools.permutations(range(n)):
            inv = sum(1 for a in range(n) for b in range(a + 1, n) if perm[a] > perm[b])
            t = tuple(occ[perm[a]] for a in range(n))
            iso[pos[t], col_i] += (-1 if inv & 1 else 1) * norm
    return iso.conj().T @ h_t @ iso


class TestHamiltonian:
    def test_free_is_second_quantized_kinetic(self):
        basis = build_basis(1, 2, 2)
        ham = build_hamiltonian(basis, V0)
        full = ham.full_matrix()
        expect = fk.dgamma_matrix(ham.fb, kinetic(basis).mat)
        assert np.abs(full - expect).max() < 1e-13

    @pytest.mark.parametrize("big_k,n", [(2, 2), (3, 2), (3, 3), (2, 3)])
    def test_sector_matches_slater_condon(self, big_k, n):
        basis = build_basis(1, big_k, n)
        ham = build_hamiltonian(basis, MIXED_POT)
        diff = ham.sector_matrix(n) - sc.sector_matrix(basis, MIXED_POT, n)
        assert np.abs(diff).max() < 1e-12

    @pytest.mark.parametrize("big_k,n", [(2, 2), (2, 3)])
    def test_slater_condon_matches_tensor_oracle(self, big_k, n):
        basis = build_basis(1, big_k, n)
        diff = sc.sector_matrix(basis, MIXED_POT, n) - tensor_oracle(basis, MIXED_POT, n)
        assert np.abs(diff).max() < 1e-12

    def test_sector_oracle_2d(self):
        basis = build_basis(2, 1, 2)
        pot = Potential([{"p": [1, 0], "v": 0.3}, {"p": [0, 1], "v": -0.2}], 2)
        ham = build_hamiltonian(basis, pot)
        diff = ham.sector_matrix(2) - sc.sector_matrix(basis, pot, 2)
        assert np.abs(diff).max() < 1e-12

    def test_hermitian_and_number_conserving(self):
        basis = build_basis(1, 2, 2)
        ham = build_hamiltonian(basis, MIXED_POT)
        full = ham.full_matrix()
        assert np.abs(full - full.conj().T).max() < 1e-13
        pop = fk.number_diag(ham.fb)
        assert np.abs(full[pop[:, None] != pop[None, :]]).max() == 0.0

    def test_slater_expectation_is_hf_energy(self):
        # Wick's theorem for quasi-free states, checked by brute force
        basis = build_basis(1, 3, 3)
        ham = build_hamiltonian(basis, MIXED_POT)
        orbs = scenario_trapped(basis, 3, COS_WELL)
        psi = fk.slater(ham.fb, orbs)
        from fermidyn.hartreefock import hf_energy

        assert abs(ham.expectation(psi) - hf_energy(basis, MIXED_POT, orbs.omega())) < 1e-12

    def test_capacity_cap(self):
        with pytest.raises(CapacityError):
            build_hamiltonian(build_basis(1, 8, 3), V0)  # M = 17


class TestEvolveExact:
    def test_identity_at_zero(self):
        basis = build_basis(1, 2, 2)
        ham = build_hamiltonian(basis, MIXED_POT)
        orbs = scenario_trapped(basis, 2, COS_WELL)
        psi = fk.slater(ham.fb, orbs)
        assert np.abs(evolve_exact(ham, psi, [0.0])[0] - psi).max() < 1e-14

    def test_free_slater_phase(self):
        basis, orbs = scenario_fermi_ball(1, 1.0, 2)
        ham = build_hamiltonian(basis, V0)
        psi = fk.slater(ham.fb, orbs)
        t = 0.37
        psi_t = evolve_exact(ham, psi, [t])[0]
        theta = sum(basis.hbar * k**2 * t for k in (-1, 0, 1))
        assert np.abs(psi_t - np.exp(-1j * theta) * psi).max() < 1e-13

    def test_unitarity_and_energy(self):
        basis = build_basis(1, 2, 2)
        ham = build_hamiltonian(basis, MIXED_POT)
        orbs = scenario_trapped(basis, 2, COS_WELL)
        psi = fk.slater(ham.fb, orbs)
        e0 = ham.expectation(psi)
        for psi_t in evolve_exact(ham, psi, [0.3, 0.7, 1.0]):
            assert abs(np.linalg.norm(psi_t) - 1.0) < 1e-12
            assert abs(ham.expectation(psi_t) - e0) < 1e-10


class TestFluctuations:
    def test_initial_snapshot_is_vacuum(self):
        basis = build_basis(1, 2, 2)
        ham = build_hamiltonian(basis, MIXED_POT)
        orbs = scenario_trapped(basis, 2, COS_WELL)
        psi = fk.slater(ham.fb, orbs)
        snap = fluctuation_state(ham.fb, orbs, psi, 0.0)
        assert np.abs(snap.xi - fk.vacuum(ham.fb)).max() < 1e-12
        assert snap.number_expectation == pytest.approx(1.0, abs=1e-12)

    def test_free_flow_stays_vacuum(self):
        basis = build_basis(1, 3, 2)
        ham = build_hamiltonian(basis, V0)
        orbs = scenario_trapped(basis, 2, COS_WELL)
        psi0 = fk.slater(ham.fb, orbs)
        times = [0.0, 0.5, 1.0]
        traj = evolve_hf(basis, V0, orbs.coeffs, times, tol=1e-12, dt_max=0.002)
        for st, psi in zip(traj, evolve_exact(ham, psi0, times)):
            snap = fluctuation_state(ham.fb, st.orbitals, psi, st.t)
            assert abs(snap.number_expectation - 1.0) < 1e-10

    def test_trace_distance_check_values(self):
        basis = build_basis(1, 2, 2)
        ham = build_hamiltonian(basis, MIXED_POT)
        orbs = scenario_trapped(basis, 2, COS_WELL)
        psi = fk.slater(ham.fb, orbs)
        lhs, rhs = trace_distance_check(ham.fb, psi, orbs.omega(), 1.0, basis.N)
        assert lhs < 1e-12
        assert rhs == pytest.approx(2.0 + 4.0 * np.sqrt(2.0), rel=1e-12)

    def test_number_expectation_identity(self):
        # <xi, N xi> = 2N - 2 tr(omega gamma): gauge-invariant cross-check
        basis = build_basis(1, 2, 2)
        ham = build_hamiltonian(basis, COS_POT)
        orbs = scenario_trapped(basis, 2, COS_WELL)
        psi0 = fk.slater(ham.fb, orbs)
        times = [0.0, 0.3]
        traj = evolve_hf(basis, COS_POT, orbs.coeffs, times, tol=1e-10)
        for st, psi in zip(traj, evolve_exact(ham, psi0, times)):
            snap = fluctuation_state(ham.fb, st.orbitals, psi, st.t)
            gamma = fk.one_pdm(ham.fb, psi)
            identity = 2 * basis.N - 2 * np.real(np.trace(st.omega @ gamma)) + 1
            assert snap.number_expectation == pytest.approx(identity, abs=1e-10)


@pytest.fixture(scope="module")
def small_interacting():
    basis = build_basis(1, 2, 2)
    orbs0 = scenario_trapped(basis, 2, COS_WELL)
    ham = build_hamiltonian(basis, COS_POT)
    rhs = make_rhs(basis, COS_POT)
    traj = evolve_hf(basis, COS_POT, orbs0.coeffs, [0.2], tol=1e-11, dt_max=0.002)
    return basis, ham, rhs, orbs0, traj[0].orbitals.coeffs


class TestGenerator:
    def test_free_generator_conserves_number(self, small_interacting):
        basis, _, _, orbs0, _ = small_interacting
        ham0 = build_hamiltonian(basis, V0)
        rhs0 = make_rhs(basis, V0)
        traj = evolve_hf(basis, V0, orbs0.coeffs, [0.2], tol=1e-11, dt_max=0.002)
        gen = generator_matrix(ham0, rhs0, traj[0].orbitals.coeffs, 1e-5 * basis.hbar)
        pop = fk.number_diag(ham0.fb)
        off = np.where(pop[:, None] != pop[None, :], gen, 0.0)
        assert np.abs(off).max() < 1e-6

    def test_hermiticity_scales_as_delta_squared(self, small_interacting):
        basis, ham, rhs, _, c_t = small_interacting
        delta = 1e-5 * basis.hbar
        h1 = np.abs(
            generator_matrix(ham, rhs, c_t, delta)
            - generator_matrix(ham, rhs, c_t, delta).conj().T
        ).max()
        h2 = np.abs(
            generator_matrix(ham, rhs, c_t, delta / 2)
            - generator_matrix(ham, rhs, c_t, delta / 2).conj().T
        ).max()
        assert 3.5 < h1 / h2 < 4.5

    def test_generator_moves_fluctuation_vector(self, small_interacting):
        basis, ham, rhs, orbs0, c_t = small_interacting
        gen = generator_matrix(ham, rhs, c_t, 1e-5 * basis.hbar)
        psi0 = fk.slater(ham.fb, orbs0)
        dt = 1e-4
        times = [0.2 - dt, 0.2, 0.2 + dt]
        traj = evolve_hf(basis, COS_POT, orbs0.coeffs, times, tol=1e-13, dt_max=5e-4)
        xis = [
            fk.apply_particle_hole(ham.fb, st.orbitals, psi, adjoint=True)
            for st, psi in zip(traj, evolve_exact(ham, psi0, times))
        ]
        fd = 1j * basis.hbar * (xis[2] - xis[0]) / (2 * dt)
        assert np.abs(fd - gen @ xis[1]).max() < 1e-7

    def test_block_decomposition_residuals(self, small_interacting):
        basis, ham, rhs, _, c_t = small_interacting
        orbs_t = fk.OrbitalSet(c_t, basis)
        delta = 1e-5 * basis.hbar
        gen = generator_matrix(ham, rhs, c_t, delta)
        rep = generator_block_decomposition(ham.fb, gen, basis, COS_POT, orbs_t, delta)
        assert rep.max_residual < 1e-6
        assert rep.number_block_commutator == 0.0
        rep2 = generator_block_decomposition(
            ham.fb,
            generator_matrix(ham, rhs, c_t, delta / 2),
            basis,
            COS_POT,
            orbs_t,
            delta / 2,
        )
        for r1, r2 in [
            (rep.plus4_residual, rep2.plus4_residual),
            (rep.plus2_residual, rep2.plus2_residual),
        ]:
            assert 3.5 < r1 / r2 < 4.5

    def test_full_band_kernels_vanish(self):
        # N = M: the hole projector is zero, so A and B carry no weight
        basis = build_basis(1, 1, 3)
        orbs = scenario_trapped(basis, 3, COS_WELL)
        for _, g, h, _ in fluctuation_quartic_kernels(basis, COS_POT, orbs):
            assert np.abs(g).max() < 1e-13
            assert np.abs(h).max() < 1e-13
        fb = fk.FockBasis(basis.M)
        a_mat, bc_mat = quartic_block_matrices(fb, basis, COS_POT, orbs)
        assert np.abs(a_mat).max() < 1e-13
        assert np.abs(bc_mat).max() < 1e-13


class TestNumberGrowth:
    def test_vacuum_expectation_vanishes(self, small_interacting):
        basis, ham, _, orbs0, _ = small_interacting
        vac = fk.vacuum(ham.fb)
        assert abs(quartic_expectation(ham.fb, basis, COS_POT, orbs0, vac)) < 1e-14
        assert direct_number_derivative(ham.fb, basis, COS_POT, orbs0, vac) == 0.0

    def test_fd_matches_direct_derivative(self, small_interacting):
        basis, ham, _, orbs0, _ = small_interacting
        psi0 = fk.slater(ham.fb, orbs0)

        def series(step):
            times = [0.2 + i * step for i in (-1, 0, 1)]
            traj = evolve_hf(basis, COS_POT, orbs0.coeffs, times, tol=1e-13, dt_max=5e-4)
            snaps = [
                fluctuation_state(ham.fb, st.orbitals, psi, st.t)
                for st, psi in zip(traj, evolve_exact(ham, psi0, times))
            ]
            fd = (snaps[2].number_expectation - snaps[0].number_expectation) / (2 * step)
            direct = direct_number_derivative(
                ham.fb, basis, COS_POT, traj[1].orbitals, snaps[1].xi
            )
            return abs(fd - direct)

        e1, e2 = series(2e-3), series(1e-3)
        assert e1 < 1e-4
        assert 3.0 < e1 / e2 < 5.0  # central differences: O(step^2)

    def test_growth_report_free_case(self):
        basis = build_basis(1, 2, 2)
        times = np.linspace(0, 1, 11)
        nexp = np.ones_like(times)
        rep = number_growth_report(times, nexp, np.zeros_like(times), 1.0, 0.5, 2.0, basis.hbar)
        assert rep.max_ratio == 0.0
        assert rep.max_fd_vs_direct == 0.0


class TestTheorem:
    def test_rhs_formula(self):
        # by hand: sqrt(2) * 6 * exp(8 * 1.5 / 2 * exp(4 * 0.5))
        val = theorem_rhs(2, 1.0, 0.5, 1.0, 0.5)
        assert val == pytest.approx(np.sqrt(2) * 6 * np.exp(6 * np.exp(2.0)), rel=1e-12)

    def test_zero_time_rows(self):
        rows, trend = theorem_table([(2, [0.0], [0.0]), (3, [0.0], [0.0])], 1.0, 1.0, 2.0)
        assert all(r.ok for r in rows)
        assert trend

    def test_fermi_ball_weak_coupling_near_stationary(self):
        # stationary HF + nearly stationary exact state: lhs stays tiny vs rhs
        weak = Potential([{"p": [1], "v": 0.001}], 1)
        basis, orbs = scenario_fermi_ball(1, 2.0, 4)
        ham = build_hamiltonian(basis, weak)
        psi0 = fk.slater(ham.fb, orbs)
        times = [0.0, 0.5, 1.0]
        traj = evolve_hf(basis, weak, orbs.coeffs, times, tol=1e-10)
        for st, psi in zip(traj, evolve_exact(ham, psi0, times)):
            snap = fluctuation_state(ham.fb, st.orbitals, psi, st.t)
            lhs, rhs = trace_distance_check(
                ham.fb, psi, st.omega, snap.number_expectation, basis.N
            )
            assert lhs <= 1e-6 * rhs
