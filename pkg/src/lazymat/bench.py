"""Benchmark harness: ten canonical expressions, naive vs optimised.

The harness builds each expression once, verifies that both evaluation
arms agree numerically (refusing to time anything on a mismatch), then
reports mean wall-clock seconds over repeated evaluations plus flop and
allocation counters taken from one instrumented run per arm.

Timing methodology: the tree is pre-built; every timed evaluation of
the optimised arm covers validation, rewriting and execution, so the
number reflects end-to-end per-call cost.  The verification run doubles
as warm-up and is excluded.  When the per-run mean dips below one
microsecond the loop re-times with an inner batch and divides, keeping
timer resolution out of the numbers.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import BenchMismatchError
from .expr import (ExprNode, add, as_scalar, col_of, diagmat, inverse, matmul,
                   naive_evaluate, row_of, smul, solve, trace, transpose)
from .matrix import DenseMatrix, make_matrix
from .rewrite import evaluate
from .trace import with_trace

__all__ = ["BenchRecord", "build_expression", "run_bench", "report"]

EXPRESSION_IDS = tuple(range(1, 11))

_VERIFY_TOL = 1e-8


@dataclass
class BenchRecord:
    expr_id: int
    size: int
    mode: str  # naive | optimised
    mean_seconds: float
    flops: int
    allocations: int
    runs: int


def _seed_for(seed: int, expr_id: int, k: int) -> int:
    return 1000003 * int(seed) + 101 * expr_id + k


def _random_square(m: int, s: int) -> DenseMatrix:
    return make_matrix(m, m, fill="random", seed=s)


def _boosted(m: int, s: int) -> DenseMatrix:
    """Random square plus m on the diagonal: strictly diagonally
    dominant, hence comfortably nonsingular for any seed."""
    rng = np.random.default_rng(s)
    arr = rng.random((m, m)) + m * np.eye(m)
    return DenseMatrix(np.asfortranarray(arr))


def _tridiagonal(m: int, s: int) -> DenseMatrix:
    """Random tridiagonal with the main diagonal boosted by 2m."""
    rng = np.random.default_rng(s)
    arr = np.zeros((m, m))
    idx = np.arange(m)
    arr[idx, idx] = rng.random(m) + 2 * m
    arr[idx[1:], idx[:-1]] = rng.random(m - 1)
    arr[idx[:-1], idx[1:]] = rng.random(m - 1)
    return DenseMatrix(np.asfortranarray(arr))


def build_expression(expr_id: int, m: int, seed: int):
    """Tree plus named operands for one of the ten benchmark forms.

    Operands are deterministic in (expr_id, m, seed).  Solve-family
    coefficient matrices are diagonally boosted so every seed yields a
    well-conditioned system.
    """
    if m < 4:
        raise ValueError(f"size must be at least 4, got {m}")
    s = lambda k: _seed_for(seed, expr_id, k)
    if expr_id == 1:
        a = _random_square(m, s(0))
        b = _random_square(m, s(1))
        return add(smul(0.4, a), smul(0.6, b)), {"A": a, "B": b}
    if expr_id == 2:
        a = _random_square(m, s(0))
        b = _random_square(m, s(1))
        return add(col_of(a, 0), transpose(row_of(b, 1))), {"A": a, "B": b}
    if expr_id == 3:
        a = _random_square(m, s(0))
        b = _random_square(m, s(1))
        return matmul(diagmat(a), b), {"A": a, "B": b}
    if expr_id == 4:
        a = _random_square(m, s(0))
        b = _random_square(m, s(1))
        return diagmat(matmul(a, b)), {"A": a, "B": b}
    if expr_id == 5:
        a = _random_square(m, s(0))
        b = _random_square(m, s(1))
        return trace(matmul(a, b)), {"A": a, "B": b}
    if expr_id == 6:
        a = make_matrix(m, m, fill="random", seed=s(0))
        b = make_matrix(m, m // 2, fill="random", seed=s(1))
        c = make_matrix(m // 2, m // 3, fill="random", seed=s(2))
        d = make_matrix(m // 3, m // 4, fill="random", seed=s(3))
        tree = matmul(matmul(matmul(a, b), c), d)
        return tree, {"A": a, "B": b, "C": c, "D": d}
    if expr_id == 7:
        a = make_matrix(m, 1, fill="random", seed=s(0))
        b = _random_square(m, s(1))
        c = make_matrix(m, 1, fill="random", seed=s(2))
        tree = as_scalar(matmul(matmul(transpose(a), diagmat(b)), c))
        return tree, {"a": a, "B": b, "c": c}
    if expr_id == 8:
        a = _random_square(m, s(0))
        return matmul(a, transpose(a)), {"A": a}
    if expr_id == 9:
        a = _boosted(m, s(0))
        b = make_matrix(m, 1, fill="random", seed=s(1))
        return matmul(inverse(a), b), {"A": a, "b": b}
    if expr_id == 10:
        a = _tridiagonal(m, s(0))
        b = make_matrix(m, 1, fill="random", seed=s(1))
        return solve(a, b), {"A": a, "b": b}
    raise ValueError(f"unknown expression id {expr_id}")


def _as_array(result):
    if isinstance(result, DenseMatrix):
        return result.data
    return np.array([[float(result)]])


def _relative_gap(got, ref) -> float:
    a = _as_array(got)
    b = _as_array(ref)
    scale = max(float(np.max(np.abs(b))), 1e-30)
    return float(np.max(np.abs(a - b))) / scale


def _mean_seconds(fn, runs: int) -> float:
    t0 = time.perf_counter()
    for _ in range(runs):
        fn()
    mean = (time.perf_counter() - t0) / runs
    if mean >= 1e-6:
        return mean
    # Sub-microsecond regime: batch inner calls so each timed sample
    # spans well above the timer's resolution.
    batch = max(2, math.ceil(2e-5 / max(mean, 1e-9)))
    t0 = time.perf_counter()
    for _ in range(runs):
        for _ in range(batch):
            fn()
    return (time.perf_counter() - t0) / (runs * batch)


def run_bench(expr_ids, sizes, runs: int, seed: int, mode: str = "both"):
    """BenchRecords for every (expression, size) and requested arm.

    Records come out naive-then-optimised per (expr, size) pair.  With
    mode="both" the two arms are compared before timing and a
    BenchMismatchError aborts the benchmark if they disagree.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if mode not in ("naive", "optimised", "both"):
        raise ValueError(f"unknown mode {mode!r}")
    records = []
    for expr_id in expr_ids:
        for m in sizes:
            tree, _ = build_expression(expr_id, m, seed)
            arms = []
            if mode in ("naive", "both"):
                arms.append(("naive", naive_evaluate))
            if mode in ("optimised", "both"):
                arms.append(("optimised", evaluate))
            # Verification doubles as warm-up for each arm.
            outputs = {name: fn(tree) for name, fn in arms}
            if mode == "both":
                gap = _relative_gap(outputs["optimised"], outputs["naive"])
                if gap > _VERIFY_TOL:
                    raise BenchMismatchError(
                        f"expression ({expr_id}) at size {m}: optimised and "
                        f"naive results differ by {gap:.3e} relative")
            outputs = None
            for name, fn in arms:
                traced = with_trace(lambda fn=fn: fn(tree))
                mean = _mean_seconds(lambda fn=fn: fn(tree), runs)
                records.append(BenchRecord(
                    expr_id=expr_id, size=m, mode=name, mean_seconds=mean,
                    flops=traced.counters.flops,
                    allocations=traced.counters.allocations, runs=runs))
    return records


CSV_HEADER = "expr_id,size,mode,mean_seconds,flops,allocations,runs"


def report(records, format: str = "markdown") -> str:
    """Render records as a per-expression markdown table or as CSV."""
    if format == "csv":
        lines = [CSV_HEADER]
        for r in records:
            lines.append(f"{r.expr_id},{r.size},{r.mode},{r.mean_seconds:.9e},"
                         f"{r.flops},{r.allocations},{r.runs}")
        return "\n".join(lines)
    if format != "markdown":
        raise ValueError(f"unknown format {format!r}")
    by_expr: dict = {}
    for r in records:
        by_expr.setdefault(r.expr_id, {}).setdefault(r.size, {})[r.mode] = r
    lines = []
    for expr_id in sorted(by_expr):
        lines.append(f"### expression ({expr_id})")
        lines.append("")
        lines.append("| size | naive (s) | optimised (s) | reduction |")
        lines.append("| ---: | ---: | ---: | ---: |")
        for m in sorted(by_expr[expr_id]):
            pair = by_expr[expr_id][m]
            nv = pair.get("naive")
            op = pair.get("optimised")
            ntxt = f"{nv.mean_seconds:.2e}" if nv else "n/a"
            otxt = f"{op.mean_seconds:.2e}" if op else "n/a"
            if nv and op and nv.mean_seconds > 0:
                red = 100.0 * (1.0 - op.mean_seconds / nv.mean_seconds)
                rtxt = f"{red:.2f}%"
            else:
                rtxt = "n/a"
            lines.append(f"| {m} | {ntxt} | {otxt} | {rtxt} |")
        lines.append("")
    return "\n".join(lines)
