"""Determinant-rule construction of the N-particle Hamiltonian block.

This is the independent oracle against which the second-quantized assembly
is checked: matrix elements between canonically ordered determinants are
evaluated from one- and two-body integrals with the standard diagonal /
single-excitation / double-excitation rules, never touching the Fock-space
operator machinery.

Integrals in the plane-wave basis: h is the kinetic diagonal
``hbar^2 |k|^2`` and

    <ab|V|cd> = v_{k_a - k_c}  if k_a + k_b = k_c + k_d, else 0,

with the pair coupling 1/N multiplying the two-body part.
"""

from __future__ import annotations

import itertools

import numpy as np

from .onebody import ModeBasis, Potential

__all__ = ["sector_states", "sector_matrix"]


def sector_states(M: int, n: int) -> list[int]:
    """Occupation bitstrings with n particles, ascending by integer value."""
    states = [sum(1 << j for j in combo) for combo in itertools.combinations(range(M), n)]
    return sorted(states)


def _occupied(state: int) -> tuple[int, ...]:
    return tuple(j for j in range(state.bit_length()) if state >> j & 1)


def sector_matrix(basis: ModeBasis, potential: Potential, n: int) -> np.ndarray:
    """Dense Hamiltonian on the n-particle determinants over the mode basis."""
    states = sector_states(basis.M, n)
    occs = [_occupied(s) for s in states]
    dim = len(states)
    h_diag = basis.hbar**2 * (basis.modes.astype(float) ** 2).sum(axis=1)
    lam = 1.0 / basis.N

    modes = basis.modes

    def w(a, b, c, d):
        # <ab|V|cd>; all four indices label in-cutoff modes
        if not np.array_equal(modes[a] + modes[b], modes[c] + modes[d]):
            return 0.0
        return potential.coefficients.get(tuple(modes[a] - modes[c]), 0.0)

    def w_anti(a, b, c, d):
        return w(a, b, c, d) - w(a, b, d, c)

    def phase_between(occ, lo, hi):
        lo, hi = min(lo, hi), max(lo, hi)
        return -1.0 if sum(1 for j in occ if lo < j < hi) & 1 else 1.0

    mat = np.zeros((dim, dim), dtype=np.complex128)
    for col, occ_i in enumerate(occs):
        set_i = set(occ_i)
        for row, occ_j in enumerate(occs):
            removed = sorted(set_i - set(occ_j))
            added = sorted(set(occ_j) - set_i)
            if len(removed) == 0:
                val = sum(h_diag[i] for i in occ_i)
                val += 0.5 * lam * sum(
                    w_anti(i, j, i, j) for i in occ_i for j in occ_i
                )
            elif len(removed) == 1:
                # one-body part h_{pm} vanishes: h is diagonal in plane waves
                (m,), (p,) = removed, added
                val = phase_between(occ_i, m, p) * lam * sum(
                    w_anti(p, j, m, j) for j in occ_i if j != m
                )
            elif len(removed) == 2:
                (m, q_src), (p, q_dst) = removed, added
                inter = sorted((set_i - {m}) | {p})
                gamma = phase_between(occ_i, m, p) * phase_between(inter, q_src, q_dst)
                val = gamma * lam * w_anti(p, q_dst, m, q_src)
            else:
                continue
            mat[row, col] += val
    return mat
