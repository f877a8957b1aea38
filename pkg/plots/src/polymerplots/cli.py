"""Command line interface: plots render --spec file.json | plots summarize a.csv ..."""

from __future__ import annotations

import argparse
import sys

from .figures import FigureSpec, SchemaError, render
from .summarize import summarize


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plots",
                                 description="Render figures from polymerlab CSV outputs")
    sub = ap.add_subparsers(dest="command", required=True)
    rp = sub.add_parser("render", help="render one figure from a spec file")
    rp.add_argument("--spec", required=True, help="JSON figure spec")
    sp = sub.add_parser("summarize", help="text verdict summary of scan CSVs")
    sp.add_argument("csvs", nargs="+", help="scan-style CSV files")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "render":
            out = render(FigureSpec.from_file(args.spec))
            print(f"wrote {out}")
        else:
            print(summarize(args.csvs))
    except (SchemaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
