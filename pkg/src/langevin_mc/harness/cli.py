"""Command-line entry point: ``langevin-mc {run,table1,validate}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for validation failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _threads(s):
    n = int(s)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _common(default):
    # global options are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=default, help="override the config seed")
    common.add_argument("--threads", type=_threads, default=default,
                        help="worker threads (default: $LANGEVIN_MC_THREADS or 1)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common(argparse.SUPPRESS)
    ap = _Parser(prog="langevin-mc", parents=[_common(None)],
                 description="Langevin Monte Carlo samplers, error bounds and checks.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", parents=[common], help="run an experiment from a JSON config")
    r.add_argument("config")
    t = sub.add_parser("table1", parents=[common], help="print planner iteration counts")
    t.add_argument("--csv", default=None, metavar="PATH")
    v = sub.add_parser("validate", parents=[common], help="run a validation suite")
    v.add_argument("suite")
    v.add_argument("--json", default=None, metavar="PATH")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "run":
        from .run import cmd_run
        try:
            report = cmd_run(args.config, seed=args.seed, threads=args.threads)
        except ConfigError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_USAGE
        f = report.final
        print(f"n={f['n']} w2_exact={f['w2_exact']} w2_empirical={f['w2_empirical']} "
              f"bound={report.bound['total']:.6g} valid={report.bound['valid']} "
              f"({report.wall_clock_s:.2f} s)")
        return EXIT_OK
    if args.command == "table1":
        from .table1 import cmd_table1
        cmd_table1(args.csv)
        return EXIT_OK
    from .validate import UnknownSuite, cmd_validate
    try:
        res = cmd_validate(args.suite, args.json)
    except UnknownSuite as e:
        print(f"error: {e.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if res.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
