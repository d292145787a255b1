"""Command-line entry point: ``nsosp {run, verify-bounds, verify-lower, verify-identities}``.

Exit status is 0 when every check passes, 1 when a check fails and 2 for
invalid configurations or inputs.
"""

import argparse
import sys

from . import checks, harness
from .errors import DomainError, InvariantViolation, NumericError


def _config(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if args.trials is not None:
        overrides["trials"] = args.trials
    for item in args.set or ():
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    values = {}
    if args.config:
        with open(args.config) as fh:
            values = harness.parse_config(fh.read())
    return harness.make_config({**values, **{k: v for k, v in overrides.items() if isinstance(v, str)}},
                               **{k: v for k, v in overrides.items() if not isinstance(v, str)})


def cmd_run(args):
    cfg = _config(args)
    result = harness.run_experiment(cfg)
    print(result.format_summary())
    if cfg.out:
        print(f"wrote {len(result.paths)} files to {cfg.out}")
    return 0


def cmd_verify_bounds(args):
    cfg = _config(args)
    results = harness.verify_bounds(cfg)
    for check in results:
        print(check.describe())
    return 0 if all(c.passed for c in results) else 1


def cmd_verify_lower(args):
    T = args.T
    if args.config:
        cfg = _config(args)
        T = cfg.T
    report = harness.verify_lower_bound(T=T, trials=args.trials or 20,
                                        seed=args.seed if args.seed is not None else 0)
    for text, ok in report.checks:
        print(f"{'PASS' if ok else 'FAIL'} {text}")
    return 0 if report.passed else 1


def cmd_verify_identities(args):
    report = checks.verify_identities(args.seed if args.seed is not None else 0)
    for suite in report.suites:
        print(suite.line())
    return 0 if report.passed else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="nsosp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="key = value experiment file")
            p.add_argument("--set", action="append", metavar="KEY=VALUE",
                           help="override a config key (repeatable)")
            p.add_argument("--out", help="output directory for traces")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)

    p = sub.add_parser("run", help="run an experiment and write per-trial CSV traces")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify-bounds", help="check the regret-style bound on realized runs")
    common(p)
    p.set_defaults(func=cmd_verify_bounds)

    p = sub.add_parser("verify-lower", help="random-label instance: learners and comparator cases")
    common(p)
    p.add_argument("--T", type=int, default=10_000)
    p.set_defaults(func=cmd_verify_lower)

    p = sub.add_parser("verify-identities", help="run the numerical invariant suites")
    common(p, config=False)
    p.set_defaults(func=cmd_verify_identities)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (InvariantViolation, NumericError) as err:
        where = getattr(err, "round_index", None)
        print(f"error: {err}" + (f" (round {where})" if where else ""), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
