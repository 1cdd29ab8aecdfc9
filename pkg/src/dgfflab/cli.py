"""Command line entry point: ``dgfflab run | verify | export``."""

from __future__ import annotations

import argparse
import logging
import sys

from dgfflab.errors import ConfigInvalid, DgffError, IoError


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dgfflab", description="Planar DGFF simulation laboratory.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a YAML config")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=_u64, required=True)
    r.add_argument("--threads", type=int, default=None)

    v = sub.add_parser("verify", help="run the acceptance suite")
    v.add_argument("--suite", choices=("fast", "full"), default="fast")

    e = sub.add_parser("export", help="re-export a result record")
    e.add_argument("--record", required=True, help="record.json or reports.csv")
    e.add_argument("--format", choices=("csv", "json"), required=True)
    e.add_argument("--out", default=None, help="output directory (default: next to the record)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            from dgfflab.harness import load_config, run

            cfg = load_config(args.config, seed=args.seed, threads=args.threads)
            rec = run(cfg)
            for rep in rec.reports:
                print(rep)
            print(f"config_hash={rec.config_hash} seed={rec.seed} wall_clock={rec.wall_clock:.3f}s")
            for f in rec.files:
                print(f)
            return 0
        if args.command == "verify":
            from dgfflab.acceptance import verify

            failures = verify(args.suite)
            return 1 if failures else 0
        if args.command == "export":
            from pathlib import Path

            from dgfflab.harness import export, import_record

            rec = import_record(args.record)
            out = args.out if args.out is not None else Path(args.record).parent
            for f in export(rec, args.format, out):
                print(f)
            return 0
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IoError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except DgffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
