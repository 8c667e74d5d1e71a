"""Command line entry point: ``qaenas run`` and ``qaenas inspect-genome``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .circuit import deserialize_genome, describe_genome
from .errors import QAENASError
from .runner import load_checkpoint, parse_config, run


def _parse_set(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise QAENASError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qaenas", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the evolutionary search")
    p_run.add_argument("--config", type=Path, help="JSON file with flat dotted keys")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--generations", type=int)
    p_run.add_argument("--out", type=str, help="output directory")
    p_run.add_argument("--dataset", type=str, help="training IDX image file")
    p_run.add_argument("--resume", type=Path, help="checkpoint or run directory to continue from")
    p_run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key (value parsed as JSON)")

    p_inspect = sub.add_parser("inspect-genome", help="pretty-print a genome JSON file")
    p_inspect.add_argument("file", type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "inspect-genome":
            genome = deserialize_genome(args.file.read_text(encoding="utf-8"), max_genes=10**6)
            print(describe_genome(genome))
            return 0

        overrides = _parse_set(args.set)
        overrides.update({
            "seed": args.seed, "ga.generations": args.generations,
            "output.dir": args.out, "dataset.path": args.dataset,
        })
        if args.config is None and args.resume is not None:
            # fall back to the configuration stored with the checkpoint
            _, stored, _ = load_checkpoint(args.resume)
            base = {k: v for k, v in stored.items()}
            base.update({k: v for k, v in overrides.items() if v is not None})
            config = parse_config(None, base)
        else:
            config = parse_config(args.config, overrides)
        return run(config, resume=args.resume)
    except (QAENASError, OSError) as exc:
        print(f"qaenas: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
