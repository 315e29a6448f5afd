"""Command line: render <figure-kind> --in <csv> [--in <csv>] --out <img>.

Output format follows the file extension (PNG and SVG supported by the
matplotlib Agg backend).  A schema mismatch exits non-zero naming the
missing column.
"""

import argparse
import sys

from .render import FIGURE_KINDS, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="render",
        description="Render hotspot-sim metric CSVs as figures",
    )
    parser.add_argument("kind", choices=sorted(FIGURE_KINDS),
                        help="figure kind")
    parser.add_argument("--in", dest="inputs", action="append",
                        required=True, metavar="CSV",
                        help="input CSV (repeat for the heatmap pair)")
    parser.add_argument("--out", required=True, metavar="IMG",
                        help="output image (.png or .svg)")
    parser.add_argument("--districts", default=None,
                        help="comma list restricting the district subset")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    districts = None
    if args.districts:
        districts = [int(d) for d in args.districts.split(",") if d.strip()]
    try:
        render(args.kind, args.inputs, args.out, districts)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
