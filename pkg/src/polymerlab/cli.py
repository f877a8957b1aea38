"""Command line interface: polymerlab <kind> --config <file>."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import harness

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="polymerlab",
        description="Batch experiments for the long-range directed polymer")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in harness.KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} experiment")
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None,
                        help="override master_seed (or env POLYMERLAB_SEED)")
        sp.add_argument("--threads", type=int, default=None,
                        help="override thread count (or env POLYMERLAB_THREADS)")
        sp.add_argument("--out", default=None, help="override output directory")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = harness.load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    raw["kind"] = args.kind
    seed = args.seed if args.seed is not None else os.environ.get("POLYMERLAB_SEED")
    if seed is not None:
        raw["master_seed"] = int(seed)
    threads = args.threads if args.threads is not None else os.environ.get("POLYMERLAB_THREADS")
    if threads is not None:
        raw["threads"] = int(threads)
    if args.out is not None:
        raw["out_dir"] = args.out

    try:
        cfg = harness.validate(raw)
    except harness.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        manifest = harness.run(cfg)
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(manifest.files)} files to {cfg.out_dir} "
          f"({manifest.wall_clock_s:.2f}s)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
