"""Command line entry point: ``entrolip run|validate|version``."""

import argparse
import json
import sys

from . import __version__
from .config import ConfigError, load_config
from .experiments import EXIT_CONFIG, run_experiment


def _parser():
    parser = argparse.ArgumentParser(prog="entrolip", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment and write its report and table")
    run.add_argument("config", help="path to a YAML or JSON experiment config")
    run.add_argument("--quiet", action="store_true", help="do not print the report to stdout")
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return 0
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"entrolip: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"{args.config}: ok ({config.experiment})")
        return 0
    code, report, _ = run_experiment(config)
    if not args.quiet:
        print(json.dumps(report, indent=2))
    if "error" in report:
        print(f"entrolip: {report['error']['kind']}: {report['error']['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
