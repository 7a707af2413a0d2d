"""``plots`` command line interface: render one figure kind from harness CSVs."""

from __future__ import annotations

import argparse
import sys

from .figures import FIGURE_KINDS, PlotSpec, render
from .io import SchemaError


def _parse_breakpoints(text: str):
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"breakpoints must be comma-separated integers, got {text!r}") from None


def _parse_truth(text: str):
    points = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        parts = chunk.split(",")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"truth points look like 'x,y;x,y', got {text!r}")
        points.append((float(parts[0]), float(parts[1])))
    return tuple(points)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plots", description="Render benchmark CSVs into figures")
    parser.add_argument("kind", choices=FIGURE_KINDS, help="figure kind to render")
    parser.add_argument("--in", dest="inputs", action="append", required=True, metavar="CSV", help="input CSV (repeatable)")
    parser.add_argument("--out", required=True, metavar="IMG", help="output image path (.png, .pdf, .svg)")
    parser.add_argument("--breakpoints", type=_parse_breakpoints, default=(), help="dashed vertical lines, e.g. 1000,2000,3000")
    parser.add_argument("--truth", type=_parse_truth, default=(), help="ground-truth markers for theta_scatter, e.g. '1,0;-1,0'")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    spec = PlotSpec(
        kind=args.kind,
        input_csvs=tuple(args.inputs),
        output_path=args.out,
        breakpoints=args.breakpoints,
        truth_points=args.truth,
    )
    try:
        path = render(spec)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (SchemaError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
