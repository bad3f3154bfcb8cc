"""Command-line entry point.

Subcommands map one-to-one onto pipeline stages:

    vrnnplan gen-data | train | prior-gen | target-regen | plan |
             lookahead | compare | report      [--spec FILE] [--seed N]
                                               [--out-dir DIR] [--threads N]
    vrnnplan run        # all stages in order

``--out-dir`` defaults to the VRNNPLAN_OUT environment variable, then to
``./runs``. Exit codes: 0 success, 2 configuration error, 3 numerical
failure.
"""

import argparse
import os
import sys

from .errors import NumericalError, VrnnPlanError
from .pipeline import STAGES, run_experiment, run_stage
from .runspec import load_spec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vrnnplan",
        description="Goal-directed planning experiments with a variational "
                    "recurrent state-space model.")
    parser.add_argument("--spec", default=None,
                        help="experiment spec file (INI-style); defaults "
                             "apply when omitted")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the experiment seed from the spec")
    parser.add_argument("--out-dir", default=None,
                        help="output root (default: $VRNNPLAN_OUT or ./runs)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for per-repetition parallelism")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sub.add_parser(stage, help=f"run the '{stage}' stage")
    sub.add_parser("run", help="run every stage in order")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    out_dir = args.out_dir or os.environ.get("VRNNPLAN_OUT") or "runs"
    overrides = {}
    if args.seed is not None:
        overrides[("experiment", "seed")] = args.seed
    try:
        spec = load_spec(args.spec, overrides=overrides)
        if args.command == "run":
            run_experiment(spec, out_dir, threads=args.threads)
        else:
            result = run_stage(spec, out_dir, args.command,
                               threads=args.threads)
            if result is not None:
                print(f"[{args.command}] summary: {result}")
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except VrnnPlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
