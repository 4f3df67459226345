"""Self-contained invariant suite behind ``fermidyn selftest``.

Each check returns (name, passed, detail); everything runs at M <= 8 with a
fixed seed in well under a minute.  The pytest suite covers the same ground
with more draws and tighter scenario work; this is the quick smoke screen
for a fresh checkout or install.
"""

from __future__ import annotations

import numpy as np

from .onebody import Potential, build_basis, kinetic, momentum, norms, trace_norm, translation
from .onebody import direct_term, exchange_term, OneBodyOperator
from . import fock as fk
from . import slatercondon as sc
from .hartreefock import evolve_hf, make_rhs, scenario_fermi_ball, scenario_trapped
from .exactdyn import (
    build_hamiltonian,
    evolve_exact,
    fluctuation_state,
    generator_block_decomposition,
    generator_matrix,
    trace_distance_check,
)

__all__ = ["run_selftest"]


def _random_state(rng, dim):
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def _random_orbitals(rng, m, n):
    a = rng.normal(size=(m, n)) + 1j * rng.normal(size=(m, n))
    return np.linalg.qr(a)[0]


def _check_car(rng) -> tuple[bool, str]:
    worst = 0.0
    for m in (4, 6, 8):
        fb = fk.FockBasis(m)
        eye = np.eye(fb.dim)
        for i in range(m):
            ai = fk.annihilate_matrix(fb, i)
            ci = fk.create_matrix(fb, i)
            for j in range(m):
                aj = fk.annihilate_matrix(fb, j)
                cj = fk.create_matrix(fb, j)
                worst = max(worst, np.abs(ai @ cj + cj @ ai - (i == j) * eye).max())
                worst = max(worst, np.abs(ai @ aj + aj @ ai).max())
                worst = max(worst, np.abs(ci @ cj + cj @ ci).max())
    return worst < 1e-12, f"max anticommutator residual {worst:.2e}"


def _check_second_quantization_bounds(rng, draws=100) -> tuple[bool, str]:
    slack = 1e-12
    worst = -np.inf
    for m in (4, 6, 8):
        fb = fk.FockBasis(m)
        nsq = np.sqrt(fk.number_diag(fb))
        n1sq = np.sqrt(fk.number_diag(fb) + 1.0)
        for _ in range(draws):
            a = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
            psi = _random_state(rng, fb.dim)
            a_op, a_hs, a_tr = norms(a)
            lhs = np.linalg.norm(fk.apply_dgamma(fb, a, psi))
            excess = max(
                lhs - a_op * np.linalg.norm(fk.number_diag(fb) * psi),
                lhs - a_hs * np.linalg.norm(nsq * psi),
                lhs - a_tr,
            )
            pa = np.linalg.norm(fk.apply_pair_annihilate(fb, a, psi))
            pc = np.linalg.norm(fk.apply_pair_create(fb, a, psi))
            excess = max(
                excess,
                pa - a_hs * np.linalg.norm(nsq * psi),
                pa - 2.0 * a_tr,
                pc - 2.0 * a_hs * np.linalg.norm(n1sq * psi),
                pc - 2.0 * a_tr,
            )
            worst = max(worst, excess)
    return worst < slack, f"max bound excess {worst:.2e}"


def _check_particle_hole(rng) -> tuple[bool, str]:
    worst_unitary = 0.0
    worst_slater = 0.0
    worst_rule = 0.0
    for m in range(2, 9):
        fb = fk.FockBasis(m)
        eye = np.eye(fb.dim)
        for n in range(0, m + 1, max(1, m // 3)):
            orbs = fk.OrbitalSet(_random_orbitals(rng, m, n))
            r = fk.particle_hole_matrix(fb, orbs)
            worst_unitary = max(worst_unitary, np.abs(r.conj().T @ r - eye).max())
            worst_slater = max(worst_slater, np.abs(r[:, 0] - fk.slater(fb, orbs)).max())
            worst_rule = max(worst_rule, fk.ph_field_conjugation_check(fb, orbs))
    ok = worst_unitary < 1e-12 and worst_slater < 1e-12 and worst_rule < 1e-11
    return ok, (
        f"unitarity {worst_unitary:.2e}, vacuum->Slater {worst_slater:.2e}, "
        f"field rule {worst_rule:.2e}"
    )


def _check_hamiltonian_oracle(rng) -> tuple[bool, str]:
    pot = Potential([{"p": [1], "v": 0.3}, {"p": [2], "v": -0.15}], 1)
    worst = 0.0
    for big_k, n in ((2, 2), (3, 2), (3, 3)):
        basis = build_basis(1, big_k, n)
        ham = build_hamiltonian(basis, pot)
        diff = ham.sector_matrix(n) - sc.sector_matrix(basis, pot, n)
        worst = max(worst, float(np.abs(diff).max()))
    return worst < 1e-12, f"max sector mismatch {worst:.2e}"


def _check_onebody(rng) -> tuple[bool, str]:
    basis = build_basis(1, 3, 5)
    pot = Potential([{"p": [1], "v": 0.3}], 1)
    worst = 0.0
    for _ in range(25):
        a = rng.normal(size=(basis.M, basis.M)) + 1j * rng.normal(size=(basis.M, basis.M))
        op, hs, tr = norms(a)
        worst = max(worst, op - hs, hs - tr)
        c = _random_orbitals(rng, basis.M, 3)
        om = OneBodyOperator(basis, c @ c.conj().T)
        d = direct_term(pot, om).mat
        x = exchange_term(pot, om).mat
        worst = max(worst, np.abs(d - d.conj().T).max(), np.abs(x - x.conj().T).max())
    _, ball = scenario_fermi_ball(1, 2.0, 3)
    comm = momentum(ball.basis, 1).mat @ ball.omega() - ball.omega() @ momentum(ball.basis, 1).mat
    worst = max(worst, trace_norm(comm))
    return worst < 1e-12, f"max residual {worst:.2e}"


def _check_free_case(rng) -> tuple[bool, str]:
    basis = build_basis(1, 2, 2)
    v0 = Potential(None, 1)
    orbs = scenario_trapped(basis, 2, Potential([{"p": [1], "v": 0.2}], 1))
    times = [0.0, 0.1, 0.2]
    traj = evolve_hf(basis, v0, orbs.coeffs, times, tol=1e-12, dt_max=0.002)
    ham = build_hamiltonian(basis, v0)
    psis = evolve_exact(ham, fk.slater(ham.fb, orbs), times)
    worst_dist = 0.0
    worst_n = 0.0
    for state, psi in zip(traj, psis):
        snap = fluctuation_state(ham.fb, state.orbitals, psi, state.t)
        lhs, _ = trace_distance_check(ham.fb, psi, state.omega, snap.number_expectation, basis.N)
        worst_dist = max(worst_dist, lhs)
        worst_n = max(worst_n, abs(snap.number_expectation - 1.0))
    ok = worst_dist < 1e-9 and worst_n < 1e-10
    return ok, f"trace distance {worst_dist:.2e}, <N+1>-1 {worst_n:.2e}"


def _check_generator(rng) -> tuple[bool, str]:
    pot = Potential([{"p": [1], "v": 0.25}], 1)
    basis = build_basis(1, 2, 2)
    orbs = scenario_trapped(basis, 2, Potential([{"p": [1], "v": 0.125}], 1))
    ham = build_hamiltonian(basis, pot)
    rhs = make_rhs(basis, pot)
    traj = evolve_hf(basis, pot, orbs.coeffs, [0.1], tol=1e-11, dt_max=0.002)
    c_t = traj[0].orbitals.coeffs
    delta = 1e-5 * basis.hbar
    gen = generator_matrix(ham, rhs, c_t, delta)
    rep = generator_block_decomposition(
        ham.fb, gen, basis, pot, fk.OrbitalSet(c_t, basis), delta
    )
    return rep.max_residual < 1e-6, f"max block residual {rep.max_residual:.2e}"


def run_selftest(stream=None) -> bool:
    """Run every invariant check, print one line per check, return all-pass."""
    import sys

    stream = stream or sys.stdout
    rng = np.random.default_rng(20240811)
    checks = [
        ("car-anticommutators", _check_car),
        ("second-quantization-bounds", _check_second_quantization_bounds),
        ("particle-hole-transform", _check_particle_hole),
        ("hamiltonian-sector-oracle", _check_hamiltonian_oracle),
        ("one-body-operators", _check_onebody),
        ("free-case-exactness", _check_free_case),
        ("fluctuation-generator", _check_generator),
    ]
    all_ok = True
    for name, fn in checks:
        ok, detail = fn(rng)
        all_ok &= ok
        stream.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail}\n")
    stream.write("selftest: " + ("all checks passed\n" if all_ok else "FAILURES above\n"))
    return all_ok
