"""Benchmark harness: expression factory, records, reports, CLI."""

import numpy as np
import pytest

from lazymat import (
    BenchRecord,
    CSV_HEADER,
    analyze_structure,
    build_expression,
    naive_evaluate,
    render_expr,
    report,
    run_bench,
    validate,
    with_trace,
)
from lazymat import cli
from lazymat.errors import BenchMismatchError
from lazymat.rewrite import evaluate


def test_build_expression_forms():
    t1, _ = build_expression(1, 8, seed=0)
    assert render_expr(t1) == (
        "Add(ScalarMul(0.4,Leaf#1),ScalarMul(0.6,Leaf#2))")
    t2, _ = build_expression(2, 8, seed=0)
    assert render_expr(t2) == (
        "Add(ColView(Leaf#1,0),Transpose(RowView(Leaf#2,1)))")
    t8, ops8 = build_expression(8, 8, seed=0)
    assert render_expr(t8) == "MatMul(Leaf#1,Transpose(Leaf#1))"


def test_build_expression_deterministic():
    for expr_id in range(1, 11):
        ta, opa = build_expression(expr_id, 12, seed=5)
        tb, opb = build_expression(expr_id, 12, seed=5)
        assert render_expr(ta) == render_expr(tb)
        for key in opa:
            assert np.array_equal(opa[key].data, opb[key].data)
        ra = naive_evaluate(ta)
        rb = naive_evaluate(tb)
        if isinstance(ra, float):
            assert ra == rb
        else:
            assert np.array_equal(ra.data, rb.data)


def test_build_expression_chain_shapes():
    t, ops = build_expression(6, 24, seed=1)
    shapes = sorted(m.shape for m in ops.values())
    assert shapes == [(8, 6), (12, 8), (24, 12), (24, 24)]
    s = validate(t)
    assert (s.n_rows, s.n_cols) == (24, 6)


def test_build_expression_tridiagonal_system():
    t, ops = build_expression(10, 16, seed=2)
    a = next(m for m in ops.values() if m.shape == (16, 16))
    info = analyze_structure(a)
    assert info.lower_bandwidth == 1
    assert info.upper_bandwidth == 1
    validate(t)
    # smallest legal size must also build and validate
    t4, _ = build_expression(10, 4, seed=3)
    validate(t4)


def test_build_expression_rejects_bad_input():
    with pytest.raises(ValueError):
        build_expression(11, 8, seed=0)
    with pytest.raises(ValueError):
        build_expression(0, 8, seed=0)
    with pytest.raises(ValueError):
        build_expression(1, 3, seed=0)


def test_solve_forms_are_well_conditioned():
    for expr_id in (9, 10):
        t, _ = build_expression(expr_id, 20, seed=4)
        got = evaluate(t)
        ref = naive_evaluate(t)
        np.testing.assert_allclose(got.data, ref.data, rtol=1e-8)


def test_run_bench_flop_columns():
    recs = run_bench([5], [100], runs=1, seed=0, mode="both")
    by_mode = {r.mode: r for r in recs}
    assert by_mode["optimised"].flops == 2 * 100 * 100
    assert by_mode["naive"].flops == 2 * 100 ** 3 + 100
    assert by_mode["naive"].flops / by_mode["optimised"].flops >= 25


def test_run_bench_naive_allocations():
    recs = run_bench([1], [100], runs=1, seed=0, mode="naive")
    assert len(recs) == 1
    assert recs[0].allocations == 3
    assert recs[0].mean_seconds >= 0
    assert recs[0].runs == 1


def test_run_bench_counter_determinism():
    a = run_bench([1, 4, 8], [16, 32], runs=2, seed=9, mode="both")
    b = run_bench([1, 4, 8], [16, 32], runs=2, seed=9, mode="both")
    cols_a = [(r.expr_id, r.size, r.mode, r.flops, r.allocations) for r in a]
    cols_b = [(r.expr_id, r.size, r.mode, r.flops, r.allocations) for r in b]
    assert cols_a == cols_b


def test_run_bench_validates_arguments():
    with pytest.raises(ValueError):
        run_bench([1], [16], runs=0, seed=0, mode="both")
    with pytest.raises(ValueError):
        run_bench([1], [16], runs=1, seed=0, mode="fastest")


def test_csv_report_format():
    recs = run_bench([3], [16], runs=1, seed=1, mode="both")
    text = report(recs, "csv")
    lines = text.splitlines()
    assert lines[0] == CSV_HEADER
    assert CSV_HEADER == "expr_id,size,mode,mean_seconds,flops,allocations,runs"
    assert len(lines) == 3
    fields = lines[1].split(",")
    assert fields[0] == "3" and fields[1] == "16"
    assert fields[2] in ("naive", "optimised")
    float(fields[3])  # parseable scientific time
    int(fields[4]), int(fields[5]), int(fields[6])


def test_markdown_reduction_golden():
    recs = [
        BenchRecord(expr_id=1, size=10, mode="naive", mean_seconds=1e-4,
                    flops=100, allocations=3, runs=5),
        BenchRecord(expr_id=1, size=10, mode="optimised", mean_seconds=2.5e-5,
                    flops=50, allocations=1, runs=5),
    ]
    text = report(recs, "markdown")
    assert "75.00%" in text
    assert "| size | naive (s) | optimised (s) | reduction |" in text


def test_markdown_unmatched_pair_is_na():
    recs = [BenchRecord(expr_id=2, size=10, mode="naive", mean_seconds=1e-4,
                        flops=10, allocations=3, runs=1)]
    text = report(recs, "markdown")
    assert "n/a" in text


def test_mismatch_refuses_to_report(monkeypatch):
    """If the two arms disagree, no numbers come out."""
    import lazymat.bench as bench_mod

    real = bench_mod.naive_evaluate

    def corrupted(tree):
        out = real(tree)
        out.data[0, 0] += 1.0
        return out

    monkeypatch.setattr(bench_mod, "naive_evaluate", corrupted)
    with pytest.raises(BenchMismatchError):
        run_bench([1], [8], runs=1, seed=0, mode="both")


# ---------------------------------------------------------------------------
# command-line interface
# ---------------------------------------------------------------------------

def test_cli_csv_to_stdout(capsys):
    rc = cli.main(["--expr", "1", "--sizes", "8", "--runs", "1",
                   "--seed", "3", "--format", "csv"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith(CSV_HEADER)
    assert len(out.strip().splitlines()) == 3


def test_cli_markdown_to_file(tmp_path, capsys):
    target = tmp_path / "bench.md"
    rc = cli.main(["--expr", "1,5", "--sizes", "8,16", "--runs", "1",
                   "--seed", "3", "--out", str(target)])
    assert rc == 0
    text = target.read_text()
    assert "### expression (1)" in text
    assert "### expression (5)" in text
    assert capsys.readouterr().out == ""


def test_cli_single_mode():
    rc = cli.main(["--expr", "4", "--sizes", "8", "--runs", "1",
                   "--mode", "optimised", "--format", "csv"])
    assert rc == 0


def test_cli_usage_errors(capsys):
    assert cli.main(["--expr", "11", "--sizes", "8", "--runs", "1"]) == 2
    assert cli.main(["--expr", "1", "--sizes", "2", "--runs", "1"]) == 2
    assert cli.main(["--expr", "1", "--sizes", "8", "--runs", "0"]) == 2
    assert cli.main(["--expr", "one"]) == 2
    assert cli.main(["--no-such-flag"]) == 2
    capsys.readouterr()


def test_cli_mismatch_exit_code(monkeypatch, capsys):
    def exploding(*args, **kwargs):
        raise BenchMismatchError("expression (1) size 8: arms disagree")

    monkeypatch.setattr(cli, "run_bench", exploding)
    rc = cli.main(["--expr", "1", "--sizes", "8", "--runs", "1"])
    assert rc == 3
    assert "disagree" in capsys.readouterr().err
