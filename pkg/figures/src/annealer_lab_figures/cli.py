"""figures command line interface: batch CSV-to-image rendering."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureJob, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="figures", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_render = sub.add_parser("render", help="render one figure from result CSVs")
    p_render.add_argument("--job", required=True, choices=KINDS, help="figure kind")
    p_render.add_argument("--in", dest="inputs", nargs="+", required=True, help="input CSV path(s)")
    p_render.add_argument("--out", required=True, help="output image path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = render(FigureJob(kind=args.job, inputs=tuple(args.inputs), output=args.out))
    except (SchemaError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    extra = f" bands={report.n_bands}" if report.n_bands is not None else ""
    if report.legend_alpha is not None:
        extra += f" alpha={report.legend_alpha:.4g}+/-{report.legend_alpha_err:.2g}"
    print(f"wrote {report.output} (inputs sha256:{report.input_hash[:16]}){extra}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
