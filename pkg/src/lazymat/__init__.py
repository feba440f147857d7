"""lazymat: dense linear algebra with delayed expression evaluation.

Expressions over matrices build lightweight trees instead of computing
eagerly; evaluation validates the tree, rewrites it into a plan of
kernel calls (fusing element-wise work, reordering chains, dispatching
structured solves), and runs the plan.  naive_evaluate provides the
strict temporary-per-node reference semantics for comparison.
"""

from .bench import (CSV_HEADER, EXPRESSION_IDS, BenchRecord,
                    build_expression, report, run_bench)
from .errors import (BenchMismatchError, ConformanceError, DimensionError,
                     KernelContractError, LengthError, LinalgError,
                     SingularMatrixError)
from .expr import (ExprNode, Shape, add, as_scalar, col_of, diagmat,
                   infer_shape, inverse, leaf, matmul, naive_evaluate,
                   render_expr, row_of, smul, solve, sub, trace, transpose,
                   validate)
from .matrix import (DenseMatrix, MatrixView, StructureInfo, analyze_structure,
                     col_view, make_matrix, row_view)
from .rewrite import (KernelCall, Plan, evaluate, execute, rewrite,
                      rule_log_text)
from .trace import (Counters, TraceEvent, TraceResult, render_trace,
                    with_trace)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # matrices
    "DenseMatrix", "MatrixView", "StructureInfo", "make_matrix",
    "col_view", "row_view", "analyze_structure",
    # expression trees
    "ExprNode", "Shape", "leaf", "smul", "add", "sub", "matmul", "solve",
    "transpose", "inverse", "diagmat", "trace", "as_scalar", "col_of",
    "row_of", "infer_shape", "validate", "naive_evaluate", "render_expr",
    # rewriting and execution
    "Plan", "KernelCall", "rewrite", "execute", "evaluate", "rule_log_text",
    # instrumentation
    "TraceEvent", "TraceResult", "Counters", "with_trace", "render_trace",
    # benchmarking
    "BenchRecord", "build_expression", "run_bench", "report",
    "CSV_HEADER", "EXPRESSION_IDS",
    # errors
    "LinalgError", "DimensionError", "LengthError", "ConformanceError",
    "SingularMatrixError", "KernelContractError", "BenchMismatchError",
]
