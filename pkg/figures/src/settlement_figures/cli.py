"""`plot-all` entry point."""

from __future__ import annotations

import argparse
import sys
import warnings

from .bundle import BundleError
from .plots import plot_all


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot-all",
        description="Render the settlement figure suite from a CSV bundle.")
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="directory holding the CSV bundle")
    parser.add_argument("--out", dest="out_dir", required=True,
                        help="directory to write PNGs into")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            written = plot_all(args.in_dir, args.out_dir)
        for w in caught:
            print(f"plot-all: warning: {w.message}", file=sys.stderr)
    except BundleError as exc:
        print(f"plot-all: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"plot-all: error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
