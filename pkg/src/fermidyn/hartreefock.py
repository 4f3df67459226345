"""Time-dependent Hartree-Fock flow, scenario initial data, commutator diagnostics.

The orbital equations are integrated in mode coordinates,

    i hbar d/dt phi_j = h_HF(omega) phi_j,
    h_HF(omega) = -hbar^2 Laplacian + (1/N) (direct(omega) - exchange(omega)),

with the 1/N on both mean-field terms so that the orbital and density-matrix
forms of the flow agree identically.  The integrator is classical RK4 with
step doubling for the error estimate and a QR re-orthonormalization (phase
fixed by a positive-diagonal R factor) after every accepted step.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .onebody import (
    CapacityError,
    ModeBasis,
    OneBodyOperator,
    Potential,
    boundary_weight,
    build_basis,
    density_fourier,
    direct_term,
    exchange_term,
    kinetic,
    momentum,
    trace_norm,
    translation,
)
from .fock import OrbitalSet

__all__ = [
    "HFState",
    "CommutatorDiagnostics",
    "IntegrationError",
    "hf_hamiltonian",
    "hf_rhs",
    "make_rhs",
    "hf_energy",
    "rk4_step",
    "rk4_symmetric_steps",
    "evolve_hf",
    "commutator_diagnostics",
    "estimate_constants",
    "propagation_bound",
    "scenario_fermi_ball",
    "scenario_trapped",
]


class IntegrationError(RuntimeError):
    """Adaptive step-size control failed (step underflow)."""


@dataclass(frozen=True)
class HFState:
    """Snapshot of the Hartree-Fock flow at one time."""

    t: float
    orbitals: OrbitalSet
    energy: float
    projection_defect: float

    @property
    def omega(self) -> np.ndarray:
        return self.orbitals.omega()


@dataclass(frozen=True)
class CommutatorDiagnostics:
    """Semiclassical commutator sizes of a density matrix at one time.

    trP is the l2-over-components trace norm of [P, omega]; trX the max over
    sampled integer translations alpha of ||[exp(i alpha.x), omega]||_tr
    divided by (1 + |alpha|).  ``bound`` is filled in by the harness once the
    scenario constants are known.
    """

    t: float
    trP: float
    trX: float
    bound: float
    truncation_flag: bool


def hf_hamiltonian(basis: ModeBasis, potential: Potential, omega: np.ndarray) -> np.ndarray:
    om = OneBodyOperator(basis, omega)
    h = kinetic(basis).mat.copy()
    if not potential.is_zero():
        h += (direct_term(potential, om).mat - exchange_term(potential, om).mat) / basis.N
    return h


def make_rhs(basis: ModeBasis, potential: Potential):
    """Orbital time-derivative map C -> -(i/hbar) h_HF(C C^dagger) C."""

    def rhs(c: np.ndarray) -> np.ndarray:
        h = hf_hamiltonian(basis, potential, c @ c.conj().T)
        return (-1j / basis.hbar) * (h @ c)

    return rhs


def hf_rhs(basis: ModeBasis, potential: Potential, orbs: OrbitalSet) -> np.ndarray:
    """Time derivative of the orbital matrix at the given state."""
    return make_rhs(basis, potential)(orbs.coeffs)


def hf_energy(basis: ModeBasis, potential: Potential, omega: np.ndarray) -> float:
    """tr(-hbar^2 Lap omega) + (1/2N) [ sum_p v_p |rho_hat(p)|^2 - tr(X omega) ]."""
    e = float(np.real(np.trace(kinetic(basis).mat @ omega)))
    if not potential.is_zero():
        om = OneBodyOperator(basis, omega)
        direct = sum(
            v * abs(density_fourier(basis, omega, p)) ** 2
            for p, v in potential.coefficients.items()
        )
        exch = float(np.real(np.trace(exchange_term(potential, om).mat @ omega)))
        e += (direct - exch) / (2.0 * basis.N)
    return e


def _projection_defect(omega: np.ndarray) -> float:
    return float(np.linalg.norm(omega @ omega - omega, 2))


def rk4_step(rhs, c: np.ndarray, h: float) -> np.ndarray:
    return c + h * _rk4_increment(rhs, c, h)


def _rk4_increment(rhs, c: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(c)
    k2 = rhs(c + 0.5 * h * k1)
    k3 = rhs(c + 0.5 * h * k2)
    k4 = rhs(c + h * k3)
    return (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def rk4_symmetric_steps(rhs, c: np.ndarray, delta: float):
    """Single RK4 steps to +/- delta plus the cancellation-free difference.

    Returns (c_plus, c_minus, dc) with dc = c_plus - c_minus evaluated as
    delta * (incr_plus + incr_minus), which avoids the floating-point
    cancellation of subtracting two nearby orbital matrices.  Used by the
    central finite difference of the particle-hole product.
    """
    incr_p = _rk4_increment(rhs, c, delta)
    incr_m = _rk4_increment(rhs, c, -delta)
    c_plus = c + delta * incr_p
    c_minus = c - delta * incr_m
    dc = delta * (incr_p + incr_m)
    return c_plus, c_minus, dc


def _orthonormalize(c: np.ndarray) -> np.ndarray:
    # QR with the R diagonal rotated positive keeps orbital phases continuous
    q, r = np.linalg.qr(c)
    d = np.diag(r)
    phase = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1.0), 1.0)
    return q * phase[np.newaxis, :]


def evolve_hf(
    basis: ModeBasis,
    potential: Potential,
    c0: np.ndarray,
    t_out,
    tol: float = 1e-9,
    dt_max: float | None = None,
) -> list[HFState]:
    """Integrate the orbital flow, returning states at the requested times.

    ``t_out`` must be non-decreasing and start at >= 0; integration starts at
    t = 0 from ``c0``.  Raises IntegrationError on step-size underflow.
    """
    rhs = make_rhs(basis, potential)
    t_out = [float(t) for t in t_out]
    if any(t < 0 for t in t_out) or any(b < a for a, b in zip(t_out, t_out[1:])):
        raise ValueError("output times must be non-decreasing and non-negative")
    if dt_max is None:
        dt_max = 0.01 * basis.hbar

    def snapshot(t, c):
        om = c @ c.conj().T
        return HFState(
            t=t,
            orbitals=OrbitalSet(c, basis),
            energy=hf_energy(basis, potential, om),
            projection_defect=_projection_defect(om),
        )

    states = []
    t = 0.0
    c = _orthonormalize(np.asarray(c0, dtype=np.complex128))
    h = dt_max
    scale = max(1.0, float(np.linalg.norm(c)))
    h_min = 1e-13 * max(1.0, t_out[-1] if t_out else 1.0)
    for target in t_out:
        while True:
            remaining = target - t
            if remaining <= 1e-12 * max(1.0, abs(target)):
                t = target
                break
            h_step = min(h, dt_max, remaining)
            big = rk4_step(rhs, c, h_step)
            half = rk4_step(rhs, rk4_step(rhs, c, 0.5 * h_step), 0.5 * h_step)
            err = float(np.linalg.norm(big - half)) / (15.0 * scale)
            if err <= tol:
                t += h_step
                c = _orthonormalize(half)
                grow = 0.9 * (tol / err) ** 0.2 if err > 0 else 5.0
                h = h_step * min(5.0, max(0.2, grow))
            else:
                h = h_step * max(0.2, 0.9 * (tol / err) ** 0.2)
                if h < h_min:
                    raise IntegrationError(
                        f"step size underflow at t={t:.6g} "
                        f"(h={h:.3e}, err={err:.3e}, tol={tol:.1e})"
                    )
        states.append(snapshot(target, c))
    return states


def _translations_in_range(basis: ModeBasis, alpha_max: int):
    for alpha in itertools.product(range(-alpha_max, alpha_max + 1), repeat=basis.d):
        if any(alpha):
            yield np.array(alpha, dtype=np.int64)


def commutator_diagnostics(
    basis: ModeBasis,
    omega: np.ndarray,
    alpha_max: int | None = None,
    boundary_tol: float = 1e-8,
    t: float = 0.0,
    bound: float = float("nan"),
) -> CommutatorDiagnostics:
    """Exact singular-value commutator sizes of omega.

    The translation maximum runs over integer alpha with 1 <= |alpha|_inf <=
    alpha_max (default 2K).  The truncation flag reports orbital weight above
    ``boundary_tol`` within alpha_max of the cutoff boundary, where the
    dropped-mode convention contaminates the translation commutator.
    """
    if alpha_max is None:
        alpha_max = 2 * basis.K
    tr_p2 = 0.0
    for i in range(1, basis.d + 1):
        comm = momentum(basis, i).mat @ omega - omega @ momentum(basis, i).mat
        tr_p2 += trace_norm(comm) ** 2
    tr_x = 0.0
    for alpha in _translations_in_range(basis, alpha_max):
        t_mat = translation(basis, alpha).mat
        comm = t_mat @ omega - omega @ t_mat
        tr_x = max(tr_x, trace_norm(comm) / (1.0 + float(np.linalg.norm(alpha))))
    flag = boundary_weight(basis, omega, alpha_max) > boundary_tol
    return CommutatorDiagnostics(
        t=t, trP=float(np.sqrt(tr_p2)), trX=tr_x, bound=bound, truncation_flag=flag
    )


def estimate_constants(members) -> tuple[float, float]:
    """C_X, C_P from the initial data of a scenario family.

    ``members`` is a sequence of (basis, diagnostics-at-t=0) pairs; the
    constants are the worst trX/(N hbar) and trP/(N hbar) over the family.
    """
    members = list(members)
    if not members:
        raise ValueError("constant estimation needs at least one family member")
    c_x = max(d.trX / (b.N * b.hbar) for b, d in members)
    c_p = max(d.trP / (b.N * b.hbar) for b, d in members)
    return float(c_x), float(c_p)


def propagation_bound(
    N: int, hbar: float, c_x: float, c_p: float, q0: float, t: float
) -> float:
    """N hbar (C_X + C_P) exp(2 max(2, q0) |t|), dominating trX and trP."""
    return N * hbar * (c_x + c_p) * float(np.exp(2.0 * max(2.0, q0) * abs(t)))


def scenario_fermi_ball(d: int, k_f: float, K: int) -> tuple[ModeBasis, OrbitalSet]:
    """Plane-wave Slater determinant of all modes with |k| <= k_f.

    N is the number of such modes; the cutoff K must leave room for the ball
    (callers should keep K >= k_f + alpha_max so translations do not truncate
    occupied modes).
    """
    if K < k_f:
        raise CapacityError(f"cutoff K={K} cannot contain the momentum ball |k| <= {k_f}")
    probe = build_basis(d, K, 1)
    inside = np.linalg.norm(probe.modes.astype(float), axis=1) <= k_f + 1e-12
    n = int(inside.sum())
    basis = build_basis(d, K, n)
    c = np.zeros((basis.M, n), dtype=np.complex128)
    for col, j in enumerate(np.nonzero(inside)[0]):
        c[j, col] = 1.0
    return basis, OrbitalSet(c, basis)


def scenario_trapped(basis: ModeBasis, N: int, well: Potential) -> OrbitalSet:
    """Lowest N eigenvectors of -hbar^2 Laplacian + W for a periodic well W.

    Eigenvalues are sorted ascending with ties broken deterministically by
    the eigensolver; a near-degenerate gap at the Fermi level is reported as
    a warning since the projection is then poorly conditioned.
    """
    if N > basis.M:
        raise CapacityError(f"cannot occupy {N} orbitals in {basis.M} modes")
    h = kinetic(basis).mat.copy()
    for p, v in well.coefficients.items():
        if v != 0.0:
            h += v * translation(basis, p).mat
    vals, vecs = np.linalg.eigh(h)
    vecs = _canonical_eigvec_order(vals, vecs)
    if N < basis.M and vals[N] - vals[N - 1] < 1e-10:
        warnings.warn(
            f"near-degenerate Fermi level in trapped scenario (gap {vals[N] - vals[N-1]:.2e})",
            RuntimeWarning,
        )
    return OrbitalSet(vecs[:, :N], basis)


def _canonical_eigvec_order(vals: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Reorder degenerate clusters by dominant mode and fix column phases.

    Within a cluster of (numerically) equal eigenvalues the columns are
    sorted by the row index of their largest coefficient, which for a
    diagonal operator reproduces the lexicographic mode tie-break; every
    column is rotated so its dominant entry is real positive.
    """
    vecs = vecs.copy()
    scale = max(1.0, float(np.abs(vals).max()))
    order = np.arange(len(vals))
    start = 0
    while start < len(vals):
        stop = start + 1
        while stop < len(vals) and vals[stop] - vals[start] < 1e-12 * scale:
            stop += 1
        if stop - start > 1:
            dominant = [int(np.argmax(np.abs(vecs[:, j]))) for j in order[start:stop]]
            order[start:stop] = order[start:stop][np.argsort(dominant, kind="stable")]
        start = stop
    vecs = vecs[:, order]
    for j in range(vecs.shape[1]):
        lead = vecs[np.argmax(np.abs(vecs[:, j])), j]
        if abs(lead) > 0:
            vecs[:, j] *= np.conj(lead) / abs(lead)
    return vecs
