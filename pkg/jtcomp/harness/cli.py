"""Command line entry point: `jtcomp [options] {run,certify,trace,restarts}`."""
import argparse
import json
import logging
import os
import sys

from jtcomp.errors import ConfigurationError
from jtcomp.harness.experiment import certify, restart_study, run_experiment, trace
from jtcomp.util.config import load_config

logger = logging.getLogger(__name__)


def build_parser():
    parser = argparse.ArgumentParser(prog="jtcomp", description="Limited-feedback joint transmission precoder "
                                                                "design experiments")
    parser.add_argument("-c", "--config", action="append", default=[], metavar="FILE",
                        help="HOCON experiment file, may be given several times (later files win)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides",
                        help="override a single configuration key, e.g. --set ssocp.max_retries=20")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--out-dir", help="directory for the CSV output")
    parser.add_argument("--workers", type=int, help="number of worker processes")
    parser.add_argument("--debug-config", action="store_true", help="print the config files and merged config")

    commands = parser.add_subparsers(dest="command")
    commands.required = True
    commands.add_parser("run", help="Monte-Carlo sweep, writes rates.csv, summary.csv and cdf.csv")
    certify_parser = commands.add_parser("certify", help="branch and bound brackets, writes bounds.csv")
    certify_parser.add_argument("drops", nargs="*", type=int, help="drop ids (default: 0..certify_drops-1)")
    trace_parser = commands.add_parser("trace", help="convergence traces of one drop, writes trace.csv")
    trace_parser.add_argument("--drop", type=int, default=0, help="drop id")
    commands.add_parser("restarts", help="best-of-k restart study over drops, writes restarts.csv")
    return parser


def overrides_from_args(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append("seed = {}".format(args.seed))
    if args.out_dir is not None:
        overrides.append("harness.out_dir = {}".format(json.dumps(args.out_dir)))
    if args.workers is not None:
        overrides.append("harness.workers = {}".format(args.workers))
    return overrides


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(cwd=os.getcwd(), files=args.config, overrides=overrides_from_args(args),
                             debug=args.debug_config)
        out_dir = config.get("harness.out_dir", "results")
        if args.command == "run":
            run_experiment(config, out_dir)
        elif args.command == "certify":
            certify(config, out_dir, args.drops or None)
        elif args.command == "restarts":
            restart_study(config, out_dir)
        else:
            trace(config, args.drop, out_dir)
    except ConfigurationError as e:
        logger.error("Invalid configuration ({}): {}".format(e.key, e))
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
