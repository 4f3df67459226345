"""Static figures from fermidyn run and family directories.

Input is strictly the files the simulation harness writes: ``trajectory.csv``
and ``manifest.json`` per run, plus ``theorem_check.csv`` and
``family_manifest.json`` for families.  Three plot kinds exist:

* ``bounds_overlay``: a quantity column against its dominating bound column
  (trace distance vs. its fluctuation bound; commutator sizes vs. the
  propagated bound).  The dominance is asserted from the data before any
  plotting happens.
* ``ratio``: the growth ratio column against the admissible value 1.
* ``family_trend``: trace distance over twice the particle number, one line
  per family member.

Every figure embeds the (first 12 hex digits of the) sha256 of the manifest
it was generated from, together with the library versions, in its caption,
so a plot can always be traced back to the exact run that produced it.
"""

from __future__ import annotations

__version__ = "0.1.0"

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "FigureSpec",
    "MissingColumnError",
    "BoundViolationError",
    "read_trajectory",
    "manifest_hash",
    "make_figures",
]

TRACE_PAIRS = [("trace_distance", "tracenormdiff_rhs")]
COMMUTATOR_PAIRS = [("trX", "propagation_bound"), ("trP", "propagation_bound")]


class MissingColumnError(KeyError):
    """A required CSV column is absent; the message names it."""


class BoundViolationError(ValueError):
    """A bound column fails to dominate its quantity column in the data."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure: which CSVs feed it, where it goes, and how to draw it."""

    kind: str  # bounds_overlay | family_trend | ratio
    csv_paths: tuple[Path, ...]
    output: Path
    log_scale: bool = False
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("bounds_overlay", "family_trend", "ratio"):
            raise ValueError(f"unknown plot kind {self.kind!r}")


def read_trajectory(path) -> dict[str, np.ndarray]:
    """Parse a harness CSV into float columns (empty dict for a bare header)."""
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        names = reader.fieldnames or []
        rows = list(reader)
    if not rows:
        return {name: np.array([]) for name in names}
    return {name: np.array([float(r[name]) for r in rows]) for name in names}


def require_columns(columns: dict, needed, source) -> None:
    for name in needed:
        if name not in columns:
            raise MissingColumnError(f"column '{name}' missing from {source}")


def manifest_hash(manifest_path) -> str:
    return hashlib.sha256(Path(manifest_path).read_bytes()).hexdigest()


def _caption(manifest_path) -> str:
    return (
        f"manifest {manifest_hash(manifest_path)[:12]} | "
        f"fermidyn-figures {__version__} | matplotlib {matplotlib.__version__} | "
        f"numpy {np.__version__}"
    )


def _assert_dominates(columns, quantity, bound, source) -> None:
    q, b = columns[quantity], columns[bound]
    bad = np.nonzero(~(b >= q) & ~np.isnan(q) & ~np.isnan(b))[0]
    if bad.size:
        i = int(bad[0])
        raise BoundViolationError(
            f"{source}: bound column '{bound}' ({b[i]:.6g}) below '{quantity}' "
            f"({q[i]:.6g}) at row {i}"
        )


def _new_figure():
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=150)
    return fig, ax

def _finish(fig, ax, title, ylabel, caption, output):
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.text(0.01, 0.005, caption, fontsize=6, family="monospace")
    fig.tight_layout(rect=(0, 0.02, 1, 1))
    output.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated renders byte-identical per library version
    fig.savefig(output, metadata={"Software": f"fermidyn-figures {__version__}"})
    plt.close(fig)
    return output


def _label(name, member=None):
    return f"{name} (N={member})" if member is not None else name


def _plot_bounds_overlay(members, pairs, title, output, caption, log_scale):
    fig, ax = _new_figure()
    for member_name, columns in members:
        for quantity, bound in pairs:
            (line,) = ax.plot(columns["t"], columns[quantity], label=_label(quantity, member_name))
            ax.plot(
                columns["t"],
                columns[bound],
                linestyle="--",
                color=line.get_color(),
                alpha=0.7,
                label=_label(bound, member_name),
            )
    if log_scale:
        ax.set_yscale("log")
    return _finish(fig, ax, title, "value", caption, output)


def _plot_ratio(members, output, caption):
    fig, ax = _new_figure()
    for member_name, columns in members:
        t, r = columns["t"], columns["gronwall_ratio"]
        keep = ~np.isnan(r)
        ax.plot(t[keep], r[keep], marker=".", label=_label("growth ratio", member_name))
    ax.axhline(1.0, color="k", linewidth=0.8, linestyle=":", label="admissible level")
    ax.set_yscale("log")
    return _finish(fig, ax, "number-growth ratio", "|d<N+1>/dt| / budget", caption, output)


def _plot_family_trend(members, output, caption):
    fig, ax = _new_figure()
    for n_value, columns in members:
        ax.plot(
            columns["t"],
            columns["trace_distance"] / (2.0 * n_value),
            marker=".",
            label=f"N={n_value}",
        )
    return _finish(
        fig, ax, "trace distance over trivial bound", "lhs / 2N", caption, output
    )


def _load_run(run_dir) -> dict[str, np.ndarray] | None:
    csv_path = Path(run_dir) / "trajectory.csv"
    columns = read_trajectory(csv_path)
    if columns and all(v.size == 0 for v in columns.values()):
        warnings.warn(f"{csv_path} has no data rows; skipping", RuntimeWarning)
        return None
    require_columns(
        columns,
        [
            "t",
            "trace_distance",
            "tracenormdiff_rhs",
            "trX",
            "trP",
            "propagation_bound",
            "gronwall_ratio",
        ],
        csv_path,
    )
    for quantity, bound in TRACE_PAIRS + COMMUTATOR_PAIRS:
        _assert_dominates(columns, quantity, bound, csv_path)
    return columns


def make_figures(in_dir, out_dir, log_scale: bool = True) -> list[Path]:
    """Render every plot kind present in a run or family directory.

    Returns the written image paths.  Raises MissingColumnError for a CSV
    that lacks a referenced column and BoundViolationError if a bound column
    fails to dominate before plotting; an empty CSV only warns.
    """
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    family_manifest = in_dir / "family_manifest.json"
    if family_manifest.exists():
        caption = _caption(family_manifest)
        member_dirs = sorted(
            (p for p in in_dir.iterdir() if p.is_dir() and p.name.startswith("N")),
            key=lambda p: int(p.name[1:]),
        )
        members = []
        for mdir in member_dirs:
            columns = _load_run(mdir)
            if columns is not None:
                members.append((int(mdir.name[1:]), columns))
        if not members:
            warnings.warn(f"no member data under {in_dir}; nothing to plot", RuntimeWarning)
            return []
        written = [
            _plot_bounds_overlay(
                members,
                TRACE_PAIRS,
                "trace-norm distance and its fluctuation bound",
                out_dir / "bounds_overlay_trace.png",
                caption,
                log_scale,
            ),
            _plot_bounds_overlay(
                members,
                COMMUTATOR_PAIRS,
                "commutator sizes and their propagated bound",
                out_dir / "bounds_overlay_commutators.png",
                caption,
                log_scale,
            ),
            _plot_ratio(members, out_dir / "ratio.png", caption),
            _plot_family_trend(members, out_dir / "family_trend.png", caption),
        ]
        return written

    manifest = in_dir / "manifest.json"
    if not manifest.exists():
        raise FileNotFoundError(f"{in_dir} holds neither manifest.json nor family_manifest.json")
    caption = _caption(manifest)
    columns = _load_run(in_dir)
    if columns is None:
        return []
    members = [(None, columns)]
    return [
        _plot_bounds_overlay(
            members,
            TRACE_PAIRS,
            "trace-norm distance and its fluctuation bound",
            out_dir / "bounds_overlay_trace.png",
            caption,
            log_scale,
        ),
        _plot_bounds_overlay(
            members,
            COMMUTATOR_PAIRS,
            "commutator sizes and their propagated bound",
            out_dir / "bounds_overlay_commutators.png",
            caption,
            log_scale,
        ),
        _plot_ratio(members, out_dir / "ratio.png", caption),
    ]
