"""Fermionic Fock space over M plane-wave modes.

State vectors live on occupation bitstrings: basis state ``n`` is the integer
with bit j set iff mode j is occupied (modes numbered by their position in
the ModeBasis ordering), and bitstrings are listed by integer value.  The
basis state equals ``a*_{j1} a*_{j2} ... a*_{jr} |vac>`` with j1 < j2 < ...,
and operators use the sign convention

    a*_j |n> = (-1)^(# occupied modes below j) |n + e_j>  (0 if occupied),
    a_j  |n> = (-1)^(# occupied modes below j) |n - e_j>  (0 if empty).

Smeared fields are ``a*(f) = sum_m f_m a*_m`` (linear) and
``a(f) = sum_m conj(f_m) a_m`` (antilinear).

The particle-hole unitary of an orthonormal orbital family (phi_j)_{j=1..N}
is the ordered product ``R = F_1 F_2 ... F_N`` with ``F_j = a*(phi_j) +
a(phi_j)``; R maps the vacuum to the Slater determinant of the family.  Its
action on the fields is encoded by the matrices

    P = 1 - sum_j phi_j phi_j^dagger        (hole projector),
    S = sum_j phi_j phi_j^T                 (symmetric pair kernel),

as ``R^dagger a_m R = (-1)^N ( a(P[:, m]) - a*(S[:, m]) )``.  In kernel
language S is the conjugation kernel sum_j phi_j(y) phi_j(x); since plane
waves conjugate as conj(e_k) = e_{-k}, the associated operator
``Q = sum_j |phi_j><conj(phi_j)|`` is S composed with the mode flip
k -> -k, i.e. ``S[:, m] = Q[:, flip(m)]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .onebody import ModeBasis

__all__ = [
    "FockBasis",
    "OrbitalSet",
    "vacuum",
    "apply_create",
    "apply_annihilate",
    "apply_smear_create",
    "apply_smear_annihilate",
    "number_diag",
    "apply_number",
    "apply_dgamma",
    "apply_pair_create",
    "apply_pair_annihilate",
    "create_matrix",
    "annihilate_matrix",
    "operator_matrix",
    "dgamma_matrix",
    "pair_create_matrix",
    "pair_annihilate_matrix",
    "slater",
    "apply_particle_hole",
    "particle_hole_matrix",
    "one_pdm",
    "hole_and_pair_kernels",
    "conjugation_kernel",
    "ph_field_conjugation_check",
    "dump_matrix",
]


class FockBasis:
    """Occupation-bitstring basis of the Fock space over M modes."""

    def __init__(self, M: int):
        if M < 1:
            raise ValueError(f"need at least one mode, got M={M}")
        if M > 24:
            raise ValueError(f"M={M} gives Fock dimension 2^{M}; refusing above M=24")
        self.M = M
        self.dim = 1 << M
        self._idx = np.arange(self.dim, dtype=np.uint32)
        self.popcount = np.bitwise_count(self._idx).astype(np.int64)
        self._signs: list[np.ndarray | None] = [None] * M
        self._sectors: list[np.ndarray] | None = None

    @property
    def sectors(self) -> list[np.ndarray]:
        """sectors[n] = indices (ascending) of bitstrings with n particles."""
        if self._sectors is None:
            self._sectors = [
                np.nonzero(self.popcount == n)[0].astype(np.int64) for n in range(self.M + 1)
            ]
        return self._sectors

    def sign(self, j: int) -> np.ndarray:
        """(-1)^(# occupied modes below j), for every bitstring."""
        if self._signs[j] is None:
            below = np.uint32((1 << j) - 1)
            par = np.bitwise_count(self._idx & below).astype(np.int64) & 1
            self._signs[j] = (1 - 2 * par).astype(np.float64)
        return self._signs[j]


def vacuum(fb: FockBasis) -> np.ndarray:
    psi = np.zeros(fb.dim, dtype=np.complex128)
    psi[0] = 1.0
    return psi


def apply_create(fb: FockBasis, j: int, psi: np.ndarray) -> np.ndarray:
    bit = 1 << j
    idx = fb._idx
    free = (idx & bit) == 0
    out = np.zeros_like(psi)
    src = idx[free]
    out[src | bit] = fb.sign(j)[src] * psi[src]
    return out


def apply_annihilate(fb: FockBasis, j: int, psi: np.ndarray) -> np.ndarray:
    bit = 1 << j
    idx = fb._idx
    occ = (idx & bit) != 0
    out = np.zeros_like(psi)
    src = idx[occ]
    out[src & ~np.uint32(bit)] = fb.sign(j)[src] * psi[src]
    return out


def apply_smear_create(fb: FockBasis, f: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """a*(f) psi with a*(f) = sum_m f_m a*_m (linear in f)."""
    out = np.zeros_like(psi)
    for m in range(fb.M):
        if f[m] != 0.0:
            out += f[m] * apply_create(fb, m, psi)
    return out


def apply_smear_annihilate(fb: FockBasis, f: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """a(f) psi with a(f) = sum_m conj(f_m) a_m (antilinear in f)."""
    out = np.zeros_like(psi)
    fc = np.conj(f)
    for m in range(fb.M):
        if fc[m] != 0.0:
            out += fc[m] * apply_annihilate(fb, m, psi)
    return out


def number_diag(fb: FockBasis) -> np.ndarray:
    return fb.popcount.astype(np.float64)


def apply_number(fb: FockBasis, psi: np.ndarray) -> np.ndarray:
    return number_diag(fb) * psi


def _annihilate_all(fb: FockBasis, psi: np.ndarray) -> np.ndarray:
    return np.stack([apply_annihilate(fb, n, psi) for n in range(fb.M)])


def apply_dgamma(fb: FockBasis, A: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """dGamma(A) psi = sum_{m,n} A[m,n] a*_m a_n psi (number conserving)."""
    combos = np.asarray(A, dtype=np.complex128) @ _annihilate_all(fb, psi)
    out = np.zeros_like(psi)
    for m in range(fb.M):
        out += apply_create(fb, m, combos[m])
    return out


def apply_pair_annihilate(fb: FockBasis, A: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """sum_{m,n} A[m,n] a_m a_n psi; lowers the particle number by 2."""
    combos = np.asarray(A, dtype=np.complex128) @ _annihilate_all(fb, psi)
    out = np.zeros_like(psi)
    for m in range(fb.M):
        out += apply_annihilate(fb, m, combos[m])
    return out


def apply_pair_create(fb: FockBasis, A: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """sum_{m,n} A[m,n] a*_m a*_n psi; raises the particle number by 2."""
    created = np.stack([apply_create(fb, n, psi) for n in range(fb.M)])
    combos = np.asarray(A, dtype=np.complex128) @ created
    out = np.zeros_like(psi)
    for m in range(fb.M):
        out += apply_create(fb, m, combos[m])
    return out


def create_matrix(fb: FockBasis, j: int) -> np.ndarray:
    bit = 1 << j
    idx = fb._idx
    free = (idx & bit) == 0
    mat = np.zeros((fb.dim, fb.dim), dtype=np.complex128)
    src = idx[free]
    mat[src | bit, src] = fb.sign(j)[src]
    return mat


def annihilate_matrix(fb: FockBasis, j: int) -> np.ndarray:
    return create_matrix(fb, j).conj().T


def operator_matrix(fb: FockBasis, apply_fn) -> np.ndarray:
    """Dense matrix of a linear map given by its action on vectors."""
    mat = np.zeros((fb.dim, fb.dim), dtype=np.complex128)
    e = np.zeros(fb.dim, dtype=np.complex128)
    for c in range(fb.dim):
        e[c] = 1.0
        mat[:, c] = apply_fn(e)
        e[c] = 0.0
    return mat


def dgamma_matrix(fb: FockBasis, A: np.ndarray) -> np.ndarray:
    return operator_matrix(fb, lambda v: apply_dgamma(fb, A, v))


def pair_create_matrix(fb: FockBasis, A: np.ndarray) -> np.ndarray:
    return operator_matrix(fb, lambda v: apply_pair_create(fb, A, v))


def pair_annihilate_matrix(fb: FockBasis, A: np.ndarray) -> np.ndarray:
    return operator_matrix(fb, lambda v: apply_pair_annihilate(fb, A, v))


@dataclass(frozen=True)
class OrbitalSet:
    """N orthonormal orbitals as columns of an M x N coefficient matrix.

    The mode basis is only needed where mode arithmetic enters (the
    conjugation kernel Q); plain Fock-space work leaves it None.
    """

    coeffs: np.ndarray
    basis: ModeBasis | None = None

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.ndim != 2:
            raise ValueError(f"orbital matrix must be M x N, got shape {c.shape}")
        if self.basis is not None and c.shape[0] != self.basis.M:
            raise ValueError(f"orbital matrix must be {self.basis.M} x N, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @property
    def M(self) -> int:
        return self.coeffs.shape[0]

    @property
    def N(self) -> int:
        return self.coeffs.shape[1]

    def gram_defect(self) -> float:
        if self.N == 0:
            return 0.0
        g = self.coeffs.conj().T @ self.coeffs
        return float(np.abs(g - np.eye(self.N)).max())

    def omega(self) -> np.ndarray:
        """Induced rank-N projection sum_j phi_j phi_j^dagger."""
        return self.coeffs @ self.coeffs.conj().T


def require_orthonormal(orbs: OrbitalSet, tol: float = 1e-10) -> None:
    defect = orbs.gram_defect()
    if defect > tol:
        raise ValueError(f"orbitals are not orthonormal (Gram defect {defect:.3e} > {tol:.1e})")


def slater(fb: FockBasis, orbs: OrbitalSet) -> np.ndarray:
    """a*(phi_1) ... a*(phi_N) |vac> for an orthonormal orbital family."""
    require_orthonormal(orbs)
    psi = vacuum(fb)
    for j in reversed(range(orbs.N)):
        psi = apply_smear_create(fb, orbs.coeffs[:, j], psi)
    return psi


def apply_particle_hole(
    fb: FockBasis, orbs: OrbitalSet, psi: np.ndarray, adjoint: bool = False
) -> np.ndarray:
    """Apply R = F_1 ... F_N (or its adjoint F_N ... F_1), F_j = a*(phi_j) + a(phi_j)."""
    order = range(orbs.N) if adjoint else reversed(range(orbs.N))
    for j in order:
        f = orbs.coeffs[:, j]
        psi = apply_smear_create(fb, f, psi) + apply_smear_annihilate(fb, f, psi)
    return psi


def particle_hole_matrix(fb: FockBasis, orbs: OrbitalSet, adjoint: bool = False) -> np.ndarray:
    return operator_matrix(fb, lambda v: apply_particle_hole(fb, orbs, v, adjoint=adjoint))


def one_pdm(fb: FockBasis, psi: np.ndarray) -> np.ndarray:
    """gamma[m, n] = <psi, a*_n a_m psi> = <a_n psi, a_m psi>."""
    ann = _annihilate_all(fb, psi)
    return ann @ ann.conj().T


def hole_and_pair_kernels(orbs: OrbitalSet) -> tuple[np.ndarray, np.ndarray]:
    """(P, S) with P = 1 - sum phi phi^dagger and S = sum phi phi^T."""
    c = orbs.coeffs
    p = np.eye(orbs.M, dtype=np.complex128) - c @ c.conj().T
    s = c @ c.T
    return p, s


def _mode_flip(basis: ModeBasis) -> np.ndarray:
    f = np.zeros((basis.M, basis.M))
    for j, k in enumerate(basis.modes):
        f[basis.mode_index(-k), j] = 1.0
    return f


def conjugation_kernel(orbs: OrbitalSet) -> np.ndarray:
    """Q = sum_j |phi_j><conj(phi_j)| in mode coordinates (= S @ flip)."""
    if orbs.basis is None:
        raise ValueError("conjugation kernel needs a ModeBasis (mode flip k -> -k)")
    _, s = hole_and_pair_kernels(orbs)
    return s @ _mode_flip(orbs.basis)


def ph_field_conjugation_check(fb: FockBasis, orbs: OrbitalSet) -> float:
    """Max operator-norm residual of the field conjugation rule over all modes.

    Checks R^dagger a_m R = (-1)^N ( a(P[:, m]) - a*(Q[:, flip(m)]) ) with
    a(f) assembled antilinearly; Q[:, flip(m)] equals S[:, m].
    """
    p, s = hole_and_pair_kernels(orbs)
    sign = (-1.0) ** orbs.N
    r = particle_hole_matrix(fb, orbs)
    rd = r.conj().T
    worst = 0.0
    for m in range(fb.M):
        lhs = rd @ annihilate_matrix(fb, m) @ r
        rhs = operator_matrix(
            fb,
            lambda v: sign
            * (apply_smear_annihilate(fb, p[:, m], v) - apply_smear_create(fb, s[:, m], v)),
        )
        worst = max(worst, float(np.linalg.norm(lhs - rhs, 2)))
    return worst


def dump_matrix(mat: np.ndarray, stream) -> None:
    """Debug dump: row-major lines of comma-separated "re,im" pairs."""
    m = np.asarray(mat, dtype=np.complex128)
    for row in np.atleast_2d(m):
        stream.write(",".join(f"{z.real + 0.0:.17g},{z.imag + 0.0:.17g}" for z in row))
        stream.write("\n")
