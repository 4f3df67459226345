"""``figures <run-or-family-dir> <out-dir>``: render all plot kinds."""

from __future__ import annotations

import argparse
import sys

from . import BoundViolationError, MissingColumnError, make_figures


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render bound-overlay, ratio, and family-trend figures from fermidyn output.",
    )
    parser.add_argument("in_dir", help="run or family directory written by fermidyn")
    parser.add_argument("out_dir", help="directory for the image files")
    parser.add_argument(
        "--linear", action="store_true", help="linear instead of log scale on bound overlays"
    )
    args = parser.parse_args(argv)
    try:
        written = make_figures(args.in_dir, args.out_dir, log_scale=not args.linear)
    except (MissingColumnError, BoundViolationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
