"""One-particle space on the d-torus [0, 2pi)^d in a plane-wave mode basis.

Conventions used throughout the package:

* modes are integer vectors k with max_i |k_i| <= K, listed in lexicographic
  order; ``e_k(x) = (2pi)^(-d/2) exp(i k.x)``,
* a one-body operator is an M x M complex matrix A acting on mode
  coefficient vectors, with kernel ``A(x;y) = sum_{k,k'} A[k,k'] e_k(x)
  conj(e_{k'}(y))``,
* the effective Planck constant is tied to the particle number,
  ``hbar = N**(-1/d)``,
* a potential is a real, even trigonometric polynomial
  ``V(x) = sum_p v_p exp(i p.x)`` with finite symmetric support.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ModeBasis",
    "OneBodyOperator",
    "Potential",
    "CapacityError",
    "build_basis",
    "kinetic",
    "momentum",
    "translation",
    "direct_term",
    "exchange_term",
    "density_fourier",
    "norms",
    "op_norm",
    "hs_norm",
    "trace_norm",
]


class CapacityError(ValueError):
    """Requested particle number or mode count exceeds what the basis holds."""


@dataclass(frozen=True)
class ModeBasis:
    """Finite plane-wave basis: all k in Z^d with max_i |k_i| <= K.

    Attributes
    ----------
    d : spatial dimension.
    K : mode cutoff.
    modes : (M, d) int array, lexicographically ordered.
    M : number of modes, (2K+1)**d.
    N : particle number of the scenario the basis serves.
    hbar : effective Planck constant N**(-1/d).
    """

    d: int
    K: int
    N: int
    modes: np.ndarray
    M: int
    hbar: float
    _index: dict = field(repr=False, hash=False, compare=False, default_factory=dict)

    def mode_index(self, k) -> int:
        """Position of integer vector k in the mode list, or -1 if outside."""
        return self._index.get(tuple(int(c) for c in np.atleast_1d(k)), -1)

    def contains(self, k) -> bool:
        return self.mode_index(k) >= 0


def build_basis(d: int, K: int, N: int) -> ModeBasis:
    """Enumerate the mode cube and fix hbar = N**(-1/d).

    Raises
    ------
    CapacityError
        If N exceeds the number of modes (no room for N orthonormal orbitals).
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if K < 0:
        raise ValueError(f"cutoff must be >= 0, got {K}")
    if N < 1:
        raise ValueError(f"particle number must be >= 1, got {N}")
    M = (2 * K + 1) ** d
    if N > M:
        raise CapacityError(f"cannot hold {N} orthonormal orbitals in {M} modes (d={d}, K={K})")
    modes = np.array(list(itertools.product(range(-K, K + 1), repeat=d)), dtype=np.int64)
    hbar = float(N) ** (-1.0 / d)
    index = {tuple(int(c) for c in k): i for i, k in enumerate(modes)}
    return ModeBasis(d=d, K=K, N=N, modes=modes, M=M, hbar=hbar, _index=index)


@dataclass(frozen=True)
class OneBodyOperator:
    """Dense M x M matrix in mode coordinates."""

    basis: ModeBasis
    mat: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=np.complex128)
        if m.shape != (self.basis.M, self.basis.M):
            raise ValueError(f"matrix shape {m.shape} does not match mode count {self.basis.M}")
        object.__setattr__(self, "mat", m)

    def dagger(self) -> "OneBodyOperator":
        return OneBodyOperator(self.basis, self.mat.conj().T)


def op_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2))


def hs_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, "fro"))


def trace_norm(a: np.ndarray) -> float:
    return float(np.linalg.svd(a, compute_uv=False).sum())


def norms(a: OneBodyOperator | np.ndarray) -> tuple[float, float, float]:
    """(operator, Hilbert-Schmidt, trace) norms via singular values."""
    m = a.mat if isinstance(a, OneBodyOperator) else np.asarray(a)
    s = np.linalg.svd(m, compute_uv=False)
    return float(s.max(initial=0.0)), float(np.sqrt((s**2).sum())), float(s.sum())


class Potential:
    """Real even trigonometric polynomial V(x) = sum_p v_p exp(i p.x).

    The coefficient map is symmetrized on construction; v_p = v_{-p} and all
    v_p real is enforced.  ``q0 = sum_p (1+|p|)^2 |v_p|`` is precomputed.
    """

    def __init__(self, coefficients: dict | list | None, d: int):
        coeffs: dict[tuple, float] = {}
        items = []
        if coefficients:
            if isinstance(coefficients, dict):
                items = list(coefficients.items())
            else:
                items = [(rec["p"], rec["v"]) for rec in coefficients]
        for p, v in items:
            p = tuple(int(c) for c in np.atleast_1d(p))
            if len(p) != d:
                raise ValueError(f"coefficient index {p} has wrong dimension (expected {d})")
            v = float(v)
            for q in (p, tuple(-c for c in p)):
                if q in coeffs and abs(coeffs[q] - v) > 1e-14 * max(1.0, abs(v)):
                    raise ValueError(f"conflicting coefficients for +/-{p}: {coeffs[q]} vs {v}")
                coeffs[q] = v
        self.d = d
        # insertion order must not leak into any sum: fix a total order
        self.coefficients = dict(sorted(coeffs.items()))
        self.q0 = float(
            sum((1.0 + np.linalg.norm(p)) ** 2 * abs(v) for p, v in self.coefficients.items())
        )

    @property
    def support(self) -> list[tuple]:
        return list(self.coefficients.keys())

    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.coefficients.values())

    def max_shift(self) -> int:
        """Largest sup-norm of a support vector (0 for V = 0)."""
        if not self.coefficients:
            return 0
        return max(max(abs(c) for c in p) for p in self.coefficients)

    def __repr__(self):
        return f"Potential(d={self.d}, coefficients={self.coefficients}, q0={self.q0:.6g})"


def kinetic(basis: ModeBasis) -> OneBodyOperator:
    """-hbar^2 Laplacian: diagonal with entries hbar^2 |k|^2."""
    diag = basis.hbar**2 * (basis.modes.astype(float) ** 2).sum(axis=1)
    return OneBodyOperator(basis, np.diag(diag.astype(np.complex128)))


def momentum(basis: ModeBasis, axis: int) -> OneBodyOperator:
    """Momentum component -i hbar d/dx_i: diagonal with entries hbar k_i.

    ``axis`` is 1-based, matching the component index P_i.
    """
    if not 1 <= axis <= basis.d:
        raise ValueError(f"axis must be in 1..{basis.d}, got {axis}")
    diag = basis.hbar * basis.modes[:, axis - 1].astype(float)
    return OneBodyOperator(basis, np.diag(diag.astype(np.complex128)))


def translation(basis: ModeBasis, alpha) -> OneBodyOperator:
    """Multiplication by exp(i alpha.x): shifts mode k to k + alpha.

    Modes shifted past the cutoff are dropped, so the matrix is a partial
    isometry rather than unitary; scenarios are expected to keep orbital
    weight away from the cutoff boundary (see boundary_weight).
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=np.int64))
    if alpha.shape != (basis.d,):
        raise ValueError(f"alpha must be an integer vector of length {basis.d}")
    t = np.zeros((basis.M, basis.M), dtype=np.complex128)
    for j, k in enumerate(basis.modes):
        i = basis.mode_index(k + alpha)
        if i >= 0:
            t[i, j] = 1.0
    return OneBodyOperator(basis, t)


def density_fourier(basis: ModeBasis, omega: np.ndarray, p) -> complex:
    """Fourier coefficient of the position density: rho_hat(p) = sum_m omega[m+p, m].

    The sum runs over in-cutoff pairs (m, m+p) only.
    """
    p = np.atleast_1d(np.asarray(p, dtype=np.int64))
    total = 0.0 + 0.0j
    for m, k in enumerate(basis.modes):
        i = basis.mode_index(k + p)
        if i >= 0:
            total += omega[i, m]
    return complex(total)


def direct_term(potential: Potential, omega: OneBodyOperator) -> OneBodyOperator:
    """Mean-field multiplication operator sum_p v_p rho_hat(p) exp(i p.x)."""
    basis = omega.basis
    d = np.zeros((basis.M, basis.M), dtype=np.complex128)
    for p, v in potential.coefficients.items():
        if v == 0.0:
            continue
        rho = density_fourier(basis, omega.mat, p)
        d += v * rho * translation(basis, p).mat
    return OneBodyOperator(basis, d)


def exchange_term(potential: Potential, omega: OneBodyOperator) -> OneBodyOperator:
    """Nonlocal kernel V(x-x') omega(x;x'): X = sum_p v_p T_p omega T_p^dagger."""
    basis = omega.basis
    x = np.zeros((basis.M, basis.M), dtype=np.complex128)
    for p, v in potential.coefficients.items():
        if v == 0.0:
            continue
        t = translation(basis, p).mat
        x += v * (t @ omega.mat @ t.conj().T)
    return OneBodyOperator(basis, x)


def boundary_weight(basis: ModeBasis, omega: np.ndarray, shift: int) -> float:
    """Occupied weight on modes within ``shift`` of the cutoff boundary.

    Sums the diagonal of omega over modes k such that k + a leaves the cube
    for some integer vector a with |a|_inf <= shift.  This is the weight that
    translation by such a shift would truncate.
    """
    if shift <= 0:
        return 0.0
    near = np.abs(basis.modes).max(axis=1) > basis.K - shift
    return float(np.real(np.diag(omega))[near].sum())
