"""Command line: `plots render --spec spec.json --out figure.png`.

The spec document lists the metrics CSVs, their labels, the reference slope,
and optionally the output path (`--out` overrides it). Exit codes: 0 success,
2 bad spec or malformed CSV, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from .render import PanelSpec, SpecError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plots", description="Render metrics-CSV convergence figures.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="draw the four-panel figure from a spec document")
    p.add_argument("--spec", required=True, help="JSON spec: csvs, labels, reference_slope, out")
    p.add_argument("--out", default=None, help="output image path (overrides the spec)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = PanelSpec.from_json(args.spec)
        out = args.out if args.out is not None else spec.out
        if out is None:
            raise SpecError("no output path: pass --out or set 'out' in the spec")
        result = render(spec, out=out)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    print(f"wrote {result.out} (reference slope {result.measured_reference_slope:.6f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
