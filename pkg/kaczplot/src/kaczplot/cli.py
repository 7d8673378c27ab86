"""Command line for the figure renderer.

    kaczplot --kind fig2 --in convergence.csv --out fig2.png
    kaczplot --kind fig5 --in flops_k.csv --out fig5.png

`--in` may repeat to overlay several CSVs of the same kind.  Output format
follows the --out extension (anything the backend supports; png is the
golden-tested path).  Exit codes: 0 success, 1 output I/O failure, 2 bad
input.
"""

import argparse
import sys

from .figures import KINDS, FigureSpec, render
from .reader import CsvFormatError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kaczplot",
        description="Render experiment-harness CSVs as convergence/rate/cost charts.",
    )
    parser.add_argument("--kind", required=True, choices=KINDS,
                        help="which chart to draw")
    parser.add_argument("--in", dest="inputs", required=True, action="append",
                        metavar="CSV", help="input CSV (repeatable)")
    parser.add_argument("--out", required=True, metavar="IMG",
                        help="output image path")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec(csv_paths=tuple(args.inputs), kind=args.kind,
                          out_path=args.out)
        render(spec)
    except (CsvFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
