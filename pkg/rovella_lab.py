#!/usr/bin/env python3
"""
Command-line entry point

    rovella-lab <experiment> --config <path> [--set k=v]... [--workers N] [--seed S] [--out DIR]
"""

import argparse
import sys
from typing import List, Optional

from dotenv import load_dotenv

from runner import EXPERIMENTS, __version__, exit_status, load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rovella-lab", description="Numerical lab for the Rovella map family")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="flat key=value config file with dotted keys")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    parser.add_argument("--workers", type=int, help="parallel workers (default: ROVELLA_LAB_WORKERS or 1)")
    parser.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main function"""
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.experiment, args.config, args.overrides, args.workers, args.seed, args.out)
    except Exception as e:
        print(f"❌ Invalid configuration: {e}", file=sys.stderr)
        return exit_status(e)
    return run_experiment(config)


if __name__ == "__main__":
    sys.exit(main())
