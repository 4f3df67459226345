"""Command-line entry point: run scenarios, families, and the selftest."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .onebody import CapacityError
from .hartreefock import IntegrationError
from .harness import ConfigError, FamilyRunError, load_config, run_family, run_scenario


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fermidyn",
        description="Exact vs. Hartree-Fock fermion dynamics on the torus with bound diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario and write trajectory.csv + manifest.json")
    p_run.add_argument("--config", required=True, help="path to a JSON scenario config")
    p_run.add_argument("--out", required=True, help="output directory")

    p_fam = sub.add_parser("family", help="run an N-family and write the theorem table")
    p_fam.add_argument("--config", required=True, help="path to a JSON scenario config")
    p_fam.add_argument("--n", required=True, help="comma-separated particle numbers, e.g. 2,3,4")
    p_fam.add_argument("--out", required=True, help="output directory")

    sub.add_parser("selftest", help="run the invariant suite at M <= 8")
    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    if args.command == "version":
        print(f"fermidyn {__version__}")
        return 0

    if args.command == "selftest":
        from .selftest import run_selftest

        return 0 if run_selftest() else 1

    try:
        config = load_config(args.config)
        if args.command == "run":
            result = run_scenario(config)
            result.write(args.out)
            print(f"wrote {args.out}/trajectory.csv ({len(result.times)} rows)")
            return 0
        # family
        try:
            n_values = [int(tok) for tok in args.n.split(",") if tok.strip()]
        except ValueError:
            parser.error(f"--n must be comma-separated integers, got {args.n!r}")
        if len(set(n_values)) < 2:
            parser.error("--n needs at least two distinct particle numbers")
        family = run_family(config, n_values, out_dir=args.out)
        family.write(args.out)
        ok = family.manifest["checks"]
        print(
            f"wrote {args.out}/theorem_check.csv "
            f"(theorem_ok={ok['theorem_ok']}, trend_ok={ok['trend_ok']})"
        )
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CapacityError, IntegrationError, FamilyRunError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
