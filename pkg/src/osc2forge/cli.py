"""Command line interface: ``osc2forge check <scenario.json> [options]``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .report import emit_report
from .runner import run
from .scenario import ScenarioError, load_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osc2forge",
        description="Build the induced second-order submanifold geometry of a "
                    "scenario and verify its structure identities at seeded "
                    "sample points.")
    sub = parser.add_subparsers(dest="command", required=True)
    check = sub.add_parser("check", help="run every check of one scenario file")
    check.add_argument("scenario", help="path to a scenario JSON file")
    check.add_argument("--format", choices=("json", "text"), default="text",
                       help="report format (default: text)")
    check.add_argument("--points", type=int, default=None, metavar="N",
                       help="override the sample point count")
    check.add_argument("--seed", type=int, default=None, metavar="S",
                       help="override the sampling seed")
    check.add_argument("--tolerance", type=float, default=None, metavar="T",
                       help="override every check tolerance with T")
    check.add_argument("--out", type=Path, default=None, metavar="PATH",
                       help="write the report to PATH instead of stdout")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario, seed=args.seed, count=args.points,
                           tolerance=args.tolerance)
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    report = run(sc)
    text = emit_report(report, args.format)
    if args.out is not None:
        try:
            args.out.write_text(text, encoding="utf-8")
        except OSError as err:
            print(f"error: cannot write report to {args.out}: {err}", file=sys.stderr)
            return 2
    else:
        sys.stdout.write(text)
    if report.abort_error:
        print(f"error: {report.abort_error}", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
