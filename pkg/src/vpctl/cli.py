"""Command-line entry point: ``vpctl run`` and ``vpctl list-presets``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import ConfigError, load_config, resolve_config, run_experiment, summary_line
from .presets import PRESETS, list_presets
from .solver import NumericalBlowup

EXIT_CONFIG = 2
EXIT_BLOWUP = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vpctl", description="Vlasov-Poisson feedback-control experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file or a preset")
    run.add_argument("config", nargs="?", help="TOML (or JSON) experiment config")
    run.add_argument("--preset", choices=sorted(PRESETS), metavar="NAME", help="named preset")
    run.add_argument("--scale", choices=("desk", "paper"), help="preset scale (default desk)")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--out", help="output directory")

    ls = sub.add_parser("list-presets", help="list the named presets")
    ls.add_argument("--json", action="store_true", help="machine-readable listing")
    return p


def _list(as_json: bool) -> int:
    rows = list_presets()
    if as_json:
        print(json.dumps(rows, indent=2))
        return 0
    width = max(len(r["name"]) for r in rows)
    swidth = max(len(r["study"]) for r in rows)
    for r in rows:
        print(f"{r['name']:<{width}}  {r['study']:<{swidth}}  {r['description']}")
    return 0


def _run(args, parser) -> int:
    if (args.config is None) == (args.preset is None):
        parser.error("run needs exactly one of a config path or --preset")
    try:
        raw = load_config(args.config) if args.config else {"experiment": {"preset": args.preset}}
        cfg = resolve_config(raw, scale=args.scale, seed=args.seed, out=args.out)
        summary = run_experiment(cfg)
    except ConfigError as exc:
        print(f"vpctl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalBlowup as exc:
        print(f"vpctl: numerical blowup: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    print(summary_line(summary))
    return 0


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-presets":
        return _list(args.json)
    return _run(args, parser)


if __name__ == "__main__":
    sys.exit(main())
