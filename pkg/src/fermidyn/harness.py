"""Scenario configuration, run orchestration, and machine-readable output.

A run turns one ScenarioConfig into a trajectory CSV (one row per output
time, fixed column order, 17-significant-digit floats) plus a JSON manifest
echoing the config and the derived quantities (q0, C_X, C_P, scaling data,
bound checks).  A family reruns the same scenario across particle numbers
with shared constants and tabulates the trace-norm theorem inequality.
"""

from __future__ import annotations

import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .onebody import CapacityError, Potential, boundary_weight, build_basis
from .fock import FockBasis, OrbitalSet, slater
from .hartreefock import (
    commutator_diagnostics,
    estimate_constants,
    evolve_hf,
    propagation_bound,
    scenario_fermi_ball,
    scenario_trapped,
)
from .exactdyn import (
    build_hamiltonian,
    evolve_exact,
    fluctuation_state,
    theorem_table,
    trace_distance_check,
)

__all__ = [
    "ConfigError",
    "FamilyRunError",
    "ScenarioConfig",
    "RunResult",
    "FamilyResult",
    "load_config",
    "run_scenario",
    "run_family",
    "CSV_COLUMNS",
]

CSV_COLUMNS = [
    "t",
    "trace_distance",
    "tracenormdiff_rhs",
    "number_expectation",
    "trX",
    "trP",
    "propagation_bound",
    "gronwall_ratio",
    "hf_energy",
    "exact_energy",
    "projection_defect",
    "truncation_flags",
]

THEOREM_COLUMNS = ["N", "t", "lhs", "rhs", "trivial_2n", "informative", "ok"]

FOCK_CAP = 16  # exact dynamics works with dense 2^M vectors


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class FamilyRunError(RuntimeError):
    """A family member failed; completed members are preserved on disk."""


def _take(mapping: dict, path: str, key: str, required=True, default=None):
    if key not in mapping:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required key")
        return default
    return mapping[key]


def _reject_unknown(mapping: dict, path: str, known: set[str]):
    for key in mapping:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown key")


def _coeff_list(raw, path: str) -> list[dict]:
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise ConfigError(path, "must be a list of {p, v} records")
    out = []
    for i, rec in enumerate(raw):
        if not isinstance(rec, dict):
            raise ConfigError(f"{path}[{i}]", "must be a {p, v} record")
        _reject_unknown(rec, f"{path}[{i}]", {"p", "v"})
        p = _take(rec, f"{path}[{i}]", "p")
        v = _take(rec, f"{path}[{i}]", "v")
        if not isinstance(p, list) or not all(isinstance(c, int) for c in p):
            raise ConfigError(f"{path}[{i}].p", "must be a list of integers")
        if not isinstance(v, (int, float)):
            raise ConfigError(f"{path}[{i}].v", "must be a real number")
        out.append({"p": [int(c) for c in p], "v": float(v)})
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated run parameters; see README for the schema."""

    d: int
    K: int
    kind: str  # "fermi_ball" | "trapped"
    N: int | None  # trapped only
    k_f: float | None  # fermi_ball only
    well: list[dict]  # trapped only: {p, v} records
    potential: list[dict]  # {p, v} records
    t_final: float
    dt_out: float
    tol: float
    dt_max: float | None
    alpha_max: int | None
    fd_delta_factor: float
    seed: int

    @classmethod
    def from_dict(cls, raw: dict, path: str = "config") -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise ConfigError(path, "must be a JSON object")
        known = {
            "d",
            "K",
            "scenario",
            "potential",
            "t_final",
            "dt_out",
            "integrator",
            "alpha_max",
            "fd_delta_factor",
            "seed",
        }
        _reject_unknown(raw, path, known)
        d = _take(raw, path, "d")
        big_k = _take(raw, path, "K")
        if not isinstance(d, int) or d < 1:
            raise ConfigError(f"{path}.d", "must be a positive integer")
        if not isinstance(big_k, int) or big_k < 0:
            raise ConfigError(f"{path}.K", "must be a non-negative integer")

        scen = _take(raw, path, "scenario")
        if not isinstance(scen, dict):
            raise ConfigError(f"{path}.scenario", "must be an object")
        kind = _take(scen, f"{path}.scenario", "kind")
        n_val, k_f, well = None, None, []
        if kind == "fermi_ball":
            _reject_unknown(scen, f"{path}.scenario", {"kind", "k_F"})
            k_f = float(_take(scen, f"{path}.scenario", "k_F"))
            if k_f < 0:
                raise ConfigError(f"{path}.scenario.k_F", "must be >= 0")
        elif kind == "trapped":
            _reject_unknown(scen, f"{path}.scenario", {"kind", "N", "well"})
            n_val = _take(scen, f"{path}.scenario", "N")
            if not isinstance(n_val, int) or n_val < 1:
                raise ConfigError(f"{path}.scenario.N", "must be a positive integer")
            well = _coeff_list(_take(scen, f"{path}.scenario", "well", required=False), f"{path}.scenario.well")
        else:
            raise ConfigError(f"{path}.scenario.kind", "must be 'fermi_ball' or 'trapped'")

        potential = _coeff_list(_take(raw, path, "potential", required=False), f"{path}.potential")
        t_final = _take(raw, path, "t_final")
        dt_out = _take(raw, path, "dt_out")
        if not isinstance(t_final, (int, float)) or t_final <= 0:
            raise ConfigError(f"{path}.t_final", "must be a positive number")
        if not isinstance(dt_out, (int, float)) or dt_out <= 0 or dt_out > t_final:
            raise ConfigError(f"{path}.dt_out", "must lie in (0, t_final]")

        integ = _take(raw, path, "integrator", required=False, default={}) or {}
        if not isinstance(integ, dict):
            raise ConfigError(f"{path}.integrator", "must be an object")
        _reject_unknown(integ, f"{path}.integrator", {"tol", "dt_max"})
        tol = integ.get("tol", 1e-9)
        dt_max = integ.get("dt_max")
        if not isinstance(tol, (int, float)) or tol <= 0:
            raise ConfigError(f"{path}.integrator.tol", "must be a positive number")
        if dt_max is not None and (not isinstance(dt_max, (int, float)) or dt_max <= 0):
            raise ConfigError(f"{path}.integrator.dt_max", "must be null or a positive number")

        alpha_max = _take(raw, path, "alpha_max", required=False)
        if alpha_max is not None and (not isinstance(alpha_max, int) or alpha_max < 1):
            raise ConfigError(f"{path}.alpha_max", "must be null or a positive integer")
        fd_delta = _take(raw, path, "fd_delta_factor", required=False, default=1e-5)
        if not isinstance(fd_delta, (int, float)) or fd_delta <= 0:
            raise ConfigError(f"{path}.fd_delta_factor", "must be a positive number")
        seed = _take(raw, path, "seed", required=False, default=0)
        if not isinstance(seed, int):
            raise ConfigError(f"{path}.seed", "must be an integer")

        return cls(
            d=d,
            K=big_k,
            kind=kind,
            N=n_val,
            k_f=k_f,
            well=well,
            potential=potential,
            t_final=float(t_final),
            dt_out=float(dt_out),
            tol=float(tol),
            dt_max=None if dt_max is None else float(dt_max),
            alpha_max=alpha_max,
            fd_delta_factor=float(fd_delta),
            seed=seed,
        )

    def to_dict(self) -> dict:
        scen: dict = {"kind": self.kind}
        if self.kind == "fermi_ball":
            scen["k_F"] = self.k_f
        else:
            scen["N"] = self.N
            scen["well"] = self.well
        return {
            "d": self.d,
            "K": self.K,
            "scenario": scen,
            "potential": self.potential,
            "t_final": self.t_final,
            "dt_out": self.dt_out,
            "integrator": {"tol": self.tol, "dt_max": self.dt_max},
            "alpha_max": self.alpha_max,
            "fd_delta_factor": self.fd_delta_factor,
            "seed": self.seed,
        }

    def with_n(self, n: int) -> "ScenarioConfig":
        if self.kind != "trapped":
            raise ConfigError("config.scenario.kind", f"'{self.kind}' does not support N-families")
        return ScenarioConfig(**{**self.__dict__, "N": n})

    def output_times(self) -> list[float]:
        steps = max(1, int(round(self.t_final / self.dt_out)))
        return [self.t_final * i / steps for i in range(steps + 1)]


def load_config(path) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path} ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"not valid JSON ({exc})") from exc
    return ScenarioConfig.from_dict(raw)


def _build_initial(config: ScenarioConfig):
    if config.kind == "fermi_ball":
        basis, orbs = scenario_fermi_ball(config.d, config.k_f, config.K)
    else:
        basis = build_basis(config.d, config.K, config.N)
        orbs = scenario_trapped(basis, config.N, Potential(config.well, config.d))
    if basis.M > FOCK_CAP:
        raise ConfigError(
            "config.K", f"M={basis.M} exceeds the exact-dynamics cap M<={FOCK_CAP}"
        )
    return basis, orbs


@dataclass
class RunResult:
    config: ScenarioConfig
    basis_info: dict
    times: list[float]
    columns: dict[str, list]
    manifest: dict

    def csv_text(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for i in range(len(self.times)):
            cells = []
            for col in CSV_COLUMNS:
                val = self.columns[col][i]
                cells.append(str(val) if col == "truncation_flags" else f"{val:.17g}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trajectory.csv").write_text(self.csv_text())
        (out / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")


def run_scenario(config: ScenarioConfig, constants: tuple[float, float] | None = None) -> RunResult:
    """Execute one scenario; deterministic given the config.

    ``constants`` injects family-wide (C_X, C_P); when None they are
    estimated from this run's own initial data.
    """
    start = time.perf_counter()
    basis, orbs0 = _build_initial(config)
    potential = Potential(config.potential, config.d)
    alpha_max = config.alpha_max if config.alpha_max is not None else 2 * config.K
    times = config.output_times()

    hf_states = evolve_hf(
        basis, potential, orbs0.coeffs, times, tol=config.tol, dt_max=config.dt_max
    )
    ham = build_hamiltonian(basis, potential, fock_cap=FOCK_CAP)
    fb = ham.fb
    psi0 = slater(fb, orbs0)
    psis = evolve_exact(ham, psi0, times)
    e_exact = ham.expectation(psi0)

    diag0 = commutator_diagnostics(basis, hf_states[0].omega, alpha_max)
    if constants is None:
        c_x, c_p = estimate_constants([(basis, diag0)])
    else:
        c_x, c_p = constants

    cols: dict[str, list] = {name: [] for name in CSV_COLUMNS}
    max_p_shift = potential.max_shift()
    for state, psi in zip(hf_states, psis):
        omega = state.omega
        snap = fluctuation_state(fb, state.orbitals, psi, state.t)
        lhs, rhs = trace_distance_check(fb, psi, omega, snap.number_expectation, basis.N)
        diag = commutator_diagnostics(basis, omega, alpha_max)
        bound = propagation_bound(basis.N, basis.hbar, c_x, c_p, potential.q0, state.t)
        flags = int(diag.truncation_flag)
        if max_p_shift and boundary_weight(basis, omega, max_p_shift) > 1e-8:
            flags |= 2
        cols["t"].append(state.t)
        cols["trace_distance"].append(lhs)
        cols["tracenormdiff_rhs"].append(rhs)
        cols["number_expectation"].append(snap.number_expectation)
        cols["trX"].append(diag.trX)
        cols["trP"].append(diag.trP)
        cols["propagation_bound"].append(bound)
        cols["hf_energy"].append(state.energy)
        cols["exact_energy"].append(ham.expectation(psi))
        cols["projection_defect"].append(state.projection_defect)
        cols["truncation_flags"].append(flags)

    ratios = _gronwall_ratios(
        times, cols["number_expectation"], c_x, c_p, potential.q0
    )
    cols["gronwall_ratio"] = ratios

    bounds_ok = all(
        cols["tracenormdiff_rhs"][i] >= cols["trace_distance"][i]
        and cols["propagation_bound"][i] >= cols["trX"][i]
        and cols["propagation_bound"][i] >= cols["trP"][i]
        and not (ratios[i] == ratios[i] and ratios[i] > 1.0)  # NaN-tolerant
        for i in range(len(times))
    )

    manifest = {
        "package": "fermidyn",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config.to_dict(),
        "derived": {
            "N": basis.N,
            "M": basis.M,
            "hbar": basis.hbar,
            "q0": potential.q0,
            "C_X": c_x,
            "C_P": c_p,
            "alpha_max": alpha_max,
            "fd_delta": config.fd_delta_factor * basis.hbar,
            "exact_energy_t0": e_exact,
        },
        "checks": {
            "bounds_ok": bool(bounds_ok),
            "max_gronwall_ratio": _nanmax(ratios),
            "max_projection_defect": max(cols["projection_defect"]),
            "hf_energy_drift": max(abs(e - cols["hf_energy"][0]) for e in cols["hf_energy"]),
            "exact_energy_drift": max(abs(e - e_exact) for e in cols["exact_energy"]),
            "truncation_flag_any": any(f != 0 for f in cols["truncation_flags"]),
        },
        "wall_time_s": time.perf_counter() - start,
    }
    basis_info = {"N": basis.N, "M": basis.M, "hbar": basis.hbar}
    return RunResult(config=config, basis_info=basis_info, times=times, columns=cols, manifest=manifest)


def _gronwall_ratios(times, nexp, c_x, c_p, q0) -> list[float]:
    n = len(times)
    out = [float("nan")] * n
    denom_scale = 16.0 * (c_x + c_p)
    if denom_scale == 0.0:
        return out
    for i in range(1, n - 1):
        fd = (nexp[i + 1] - nexp[i - 1]) / (times[i + 1] - times[i - 1])
        budget = denom_scale * np.exp(2.0 * max(2.0, q0) * abs(times[i])) * nexp[i]
        out[i] = abs(fd) / budget
    return out


def _nanmax(values) -> float:
    finite = [v for v in values if v == v]
    return max(finite) if finite else float("nan")


@dataclass
class FamilyResult:
    members: list[RunResult]
    theorem_rows: list
    trend_ok: bool
    manifest: dict

    def theorem_csv_text(self) -> str:
        lines = [",".join(THEOREM_COLUMNS)]
        for row in self.theorem_rows:
            lines.append(
                ",".join(
                    [
                        str(row.N),
                        f"{row.t:.17g}",
                        f"{row.lhs:.17g}",
                        f"{row.rhs:.17g}",
                        f"{row.trivial:.17g}",
                        str(int(row.informative)),
                        str(int(row.ok)),
                    ]
                )
            )
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for member in self.members:
            member.write(out / f"N{member.basis_info['N']}")
        (out / "theorem_check.csv").write_text(self.theorem_csv_text())
        (out / "family_manifest.json").write_text(
            json.dumps(self.manifest, indent=2, sort_keys=True) + "\n"
        )


def run_family(config: ScenarioConfig, n_values, out_dir=None) -> FamilyResult:
    """Run the scenario across particle numbers with shared constants.

    Constants C_X and C_P are the family-wide worst case over the initial
    data, so every member's bounds use the same pair, as in the theorem.
    With ``out_dir`` given, each member is written as soon as it completes,
    so a member failure leaves the finished ones on disk (FamilyRunError).
    """
    n_values = sorted(set(int(n) for n in n_values))
    if len(n_values) < 2:
        raise ConfigError("family.n", "need at least two distinct particle numbers")
    start = time.perf_counter()
    member_cfgs = [config.with_n(n) for n in n_values]

    initial = []
    for cfg in member_cfgs:
        basis, orbs = _build_initial(cfg)
        alpha_max = cfg.alpha_max if cfg.alpha_max is not None else 2 * cfg.K
        initial.append((basis, commutator_diagnostics(basis, orbs.omega(), alpha_max)))
    c_x, c_p = estimate_constants(initial)

    members = []
    for cfg in member_cfgs:
        try:
            result = run_scenario(cfg, constants=(c_x, c_p))
        except Exception as exc:
            raise FamilyRunError(
                f"family member N={cfg.N} failed ({exc}); "
                f"{len(members)} completed member(s) preserved"
            ) from exc
        members.append(result)
        if out_dir is not None:
            result.write(Path(out_dir) / f"N{result.basis_info['N']}")
    potential = Potential(config.potential, config.d)
    table_input = [
        (m.basis_info["N"], m.times, m.columns["trace_distance"]) for m in members
    ]
    rows, trend_ok = theorem_table(table_input, c_x, c_p, potential.q0)
    manifest = {
        "package": "fermidyn",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config.to_dict(),
        "family_n": n_values,
        "derived": {"q0": potential.q0, "C_X": c_x, "C_P": c_p},
        "checks": {
            "theorem_ok": all(r.ok for r in rows),
            "trend_ok": trend_ok,
            "bounds_ok_all_members": all(m.manifest["checks"]["bounds_ok"] for m in members),
        },
        "wall_time_s": time.perf_counter() - start,
    }
    return FamilyResult(members=members, theorem_rows=rows, trend_ok=trend_ok, manifest=manifest)
