"""Command-line benchmark runner.

Exit codes: 0 success, 2 usage error, 3 verification mismatch between
the naive and optimised arms.
"""

from __future__ import annotations

import argparse
import sys

from .bench import EXPRESSION_IDS, report, run_bench
from .errors import BenchMismatchError


def _parse_int_list(text: str, what: str):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad {what} list: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bench",
        description="Benchmark naive vs optimised evaluation of the ten "
                    "canonical expressions.")
    p.add_argument("--expr", default="all",
                   help="comma-separated expression ids 1..10, or 'all'")
    p.add_argument("--sizes", default="100,250,500,1000",
                   help="comma-separated matrix sizes (default 100,250,500,1000)")
    p.add_argument("--runs", type=int, default=100,
                   help="timed evaluations per arm (default 100; the "
                        "original methodology used 1000)")
    p.add_argument("--seed", type=int, default=42,
                   help="seed for operand generation (default 42)")
    p.add_argument("--mode", choices=("naive", "optimised", "both"),
                   default="both")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--out", default=None,
                   help="write the report to this path instead of stdout")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    if args.expr.strip().lower() == "all":
        expr_ids = list(EXPRESSION_IDS)
    else:
        try:
            expr_ids = _parse_int_list(args.expr, "expression")
        except argparse.ArgumentTypeError as e:
            parser.print_usage(sys.stderr)
            print(f"bench: error: {e}", file=sys.stderr)
            return 2
    try:
        sizes = _parse_int_list(args.sizes, "size")
    except argparse.ArgumentTypeError as e:
        parser.print_usage(sys.stderr)
        print(f"bench: error: {e}", file=sys.stderr)
        return 2
    bad = [e for e in expr_ids if e not in EXPRESSION_IDS]
    if bad or not expr_ids:
        print(f"bench: error: expression ids must be in 1..10, got {bad}",
              file=sys.stderr)
        return 2
    if args.runs < 1:
        print("bench: error: --runs must be at least 1", file=sys.stderr)
        return 2
    if any(m < 4 for m in sizes) or not sizes:
        print("bench: error: sizes must be at least 4", file=sys.stderr)
        return 2
    try:
        records = run_bench(expr_ids, sizes, args.runs, args.seed, args.mode)
    except BenchMismatchError as e:
        print(f"bench: result mismatch: {e}", file=sys.stderr)
        return 3
    text = report(records, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
