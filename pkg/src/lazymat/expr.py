"""Delayed-evaluation expression trees.

Operators on matrices, views and expression nodes build a tree; nothing
is computed and no matrix data is copied until an evaluation entry
point walks it.  Shape checking happens when evaluation is requested
(validate), not at construction, so building an ill-shaped tree is
legal and cheap.

naive_evaluate is the strict bottom-up reference evaluator: it
materialises a fresh temporary at every node, which makes it both the
correctness oracle and the baseline arm of the benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConformanceError
from .matrix import DenseMatrix, MatrixView, _AlgebraMixin, _alloc, _free
from .trace import current_collector

__all__ = [
    "Shape",
    "ExprNode",
    "leaf",
    "smul",
    "add",
    "sub",
    "matmul",
    "solve",
    "transpose",
    "inverse",
    "diagmat",
    "trace",
    "as_scalar",
    "col_of",
    "row_of",
    "infer_shape",
    "validate",
    "naive_evaluate",
    "render_expr",
]


@dataclass(frozen=True)
class Shape:
    n_rows: int
    n_cols: int
    is_scalar: bool = False

    @property
    def dims(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def __str__(self) -> str:
        return "scalar" if self.is_scalar else f"{self.n_rows}x{self.n_cols}"


_SCALAR = Shape(1, 1, True)

_ARITY = {
    "Leaf": 0,
    "ScalarMul": 1,
    "Transpose": 1,
    "Inverse": 1,
    "DiagMat": 1,
    "Trace": 1,
    "AsScalar": 1,
    "ColView": 1,
    "RowView": 1,
    "Add": 2,
    "Sub": 2,
    "MatMul": 2,
    "Solve": 2,
}


class ExprNode(_AlgebraMixin):
    """One node of an expression tree.

    kind is one of the names in _ARITY; children is a tuple of that
    arity.  scalar is set for ScalarMul, index for ColView/RowView, and
    value holds the referenced DenseMatrix or MatrixView for Leaf.
    """

    __slots__ = ("kind", "children", "scalar", "index", "value", "_shape")

    def __init__(self, kind, children=(), scalar=None, index=None, value=None):
        if kind not in _ARITY:
            raise ValueError(f"unknown expression kind {kind!r}")
        children = tuple(children)
        if len(children) != _ARITY[kind]:
            raise ValueError(
                f"{kind} takes {_ARITY[kind]} children, got {len(children)}")
        self.kind = kind
        self.children = children
        self.scalar = scalar
        self.index = index
        self.value = value
        self._shape = None

    def __repr__(self) -> str:
        return f"<ExprNode {self.kind} arity={len(self.children)}>"


def _coerce(x) -> ExprNode:
    if isinstance(x, ExprNode):
        return x
    if isinstance(x, (DenseMatrix, MatrixView)):
        return ExprNode("Leaf", value=x)
    raise TypeError(f"cannot use {type(x).__name__} in a matrix expression")


def leaf(m) -> ExprNode:
    """Wrap a matrix or view as an expression leaf (no copy)."""
    if not isinstance(m, (DenseMatrix, MatrixView)):
        raise TypeError(f"leaf needs a matrix or view, got {type(m).__name__}")
    return ExprNode("Leaf", value=m)


def smul(c: float, x) -> ExprNode:
    return ExprNode("ScalarMul", (_coerce(x),), scalar=float(c))


def add(x, y) -> ExprNode:
    return ExprNode("Add", (_coerce(x), _coerce(y)))


def sub(x, y) -> ExprNode:
    return ExprNode("Sub", (_coerce(x), _coerce(y)))


def matmul(x, y) -> ExprNode:
    return ExprNode("MatMul", (_coerce(x), _coerce(y)))


def solve(a, b) -> ExprNode:
    """Delayed solution of a @ X = b."""
    return ExprNode("Solve", (_coerce(a), _coerce(b)))


def transpose(x) -> ExprNode:
    return ExprNode("Transpose", (_coerce(x),))


def inverse(x) -> ExprNode:
    return ExprNode("Inverse", (_coerce(x),))


def diagmat(x) -> ExprNode:
    """Diagonal matrix from a vector, or from the diagonal of a square."""
    return ExprNode("DiagMat", (_coerce(x),))


def trace(x) -> ExprNode:
    return ExprNode("Trace", (_coerce(x),))


def as_scalar(x) -> ExprNode:
    """Demand that x is 1x1 and evaluate it to a plain number."""
    return ExprNode("AsScalar", (_coerce(x),))


def col_of(x, index: int) -> ExprNode:
    """Column ``index`` of a matrix expression, as an n x 1 expression."""
    return ExprNode("ColView", (_coerce(x),), index=int(index))


def row_of(x, index: int) -> ExprNode:
    """Row ``index`` of a matrix expression, as a 1 x n expression."""
    return ExprNode("RowView", (_coerce(x),), index=int(index))


def _local_shape(node: ExprNode, child_shapes) -> Shape:
    """Shape of one node given its children's shapes; conformance
    errors name the node kind and the offending shapes."""
    kind = node.kind
    if kind == "Leaf":
        r, c = node.value.shape
        return Shape(r, c)
    if kind == "ScalarMul":
        return child_shapes[0]
    if kind in ("Add", "Sub"):
        a, b = child_shapes
        if a.dims != b.dims:
            raise ConformanceError(f"{kind}: shapes {a} and {b} do not conform")
        return Shape(a.n_rows, a.n_cols, a.is_scalar and b.is_scalar)
    if kind == "Transpose":
        a = child_shapes[0]
        return Shape(a.n_cols, a.n_rows, a.is_scalar)
    if kind == "Inverse":
        a = child_shapes[0]
        if a.n_rows != a.n_cols:
            raise ConformanceError(f"Inverse: matrix is {a}, not square")
        return a
    if kind == "DiagMat":
        a = child_shapes[0]
        if a.n_rows == a.n_cols:
            n = a.n_rows
        elif a.n_cols == 1:
            n = a.n_rows
        elif a.n_rows == 1:
            n = a.n_cols
        else:
            raise ConformanceError(
                f"DiagMat: needs a square matrix or a vector, got {a}")
        return Shape(n, n)
    if kind == "MatMul":
        a, b = child_shapes
        if a.n_cols != b.n_rows:
            raise ConformanceError(f"MatMul: cannot multiply {a} by {b}")
        return Shape(a.n_rows, b.n_cols)
    if kind == "Solve":
        a, b = child_shapes
        if a.n_rows != a.n_cols:
            raise ConformanceError(f"Solve: coefficient matrix is {a}, not square")
        if b.n_rows != a.n_rows:
            raise ConformanceError(
                f"Solve: right-hand side {b} does not conform with {a}")
        return Shape(a.n_rows, b.n_cols)
    if kind == "Trace":
        a = child_shapes[0]
        if a.n_rows != a.n_cols:
            raise ConformanceError(f"Trace: matrix is {a}, not square")
        return _SCALAR
    if kind == "AsScalar":
        a = child_shapes[0]
        if a.dims != (1, 1):
            raise ConformanceError(f"AsScalar: expression is {a}, not 1x1")
        return _SCALAR
    if kind == "ColView":
        a = child_shapes[0]
        if not 0 <= node.index < a.n_cols:
            raise ConformanceError(
                f"ColView: column {node.index} out of range for {a}")
        return Shape(a.n_rows, 1)
    if kind == "RowView":
        a = child_shapes[0]
        if not 0 <= node.index < a.n_rows:
            raise ConformanceError(
                f"RowView: row {node.index} out of range for {a}")
        return Shape(1, a.n_cols)
    raise AssertionError(kind)


def infer_shape(node: ExprNode) -> Shape:
    """Bottom-up shape of the tree, cached per node."""
    if node._shape is None:
        node._shape = _local_shape(node, [infer_shape(c) for c in node.children])
    return node._shape


def validate(node: ExprNode) -> Shape:
    """Check conformance of every subtree; raises with the path from
    the root to the first failing node."""

    def walk(n: ExprNode, path: str) -> Shape:
        shapes = [walk(c, f"{path}/{n.kind}[{i}]")
                  for i, c in enumerate(n.children)]
        if n._shape is None:
            try:
                n._shape = _local_shape(n, shapes)
            except ConformanceError as e:
                raise ConformanceError(f"{e} (at {path})") from None
        return n._shape

    return walk(node, "root")


def _diag_vector(arr):
    """1-D diagonal of a square array, or the entries of a vector."""
    r, c = arr.shape
    if r == c and r != 1:
        return np.ascontiguousarray(np.diagonal(arr))
    if c == 1:
        return arr[:, 0]
    return arr[0, :]


def naive_evaluate(node: ExprNode):
    """Strict bottom-up evaluation with a temporary at every node.

    Matrix-shaped trees return a fresh DenseMatrix; scalar-shaped trees
    (Trace, AsScalar and arithmetic over them) return a float.  Chains
    of multiplications evaluate left to right exactly as the tree
    associates them, inverses are formed explicitly, and views are
    extracted into temporaries; this is the behaviour every rewrite is
    measured against.
    """
    shape = validate(node)
    out, owned = _eval_naive(node, True)
    if not owned:
        fresh = _alloc(out.n_rows, out.n_cols, role="result")
        kernels.fused_axpby_n((1.0,), (out.data,), fresh.data)
        out = fresh
    if shape.is_scalar:
        return float(out.data[0, 0])
    return out


def _eval_naive(node: ExprNode, is_root: bool):
    """Returns (DenseMatrix, owned); owned means the caller must free
    or hand on the buffer.  Leaf matrices come back borrowed."""
    kind = node.kind
    role = "result" if is_root else "temp"

    if kind == "Leaf":
        v = node.value
        if isinstance(v, DenseMatrix):
            return v, False
        out = _alloc(v.n_rows, v.n_cols, role=role)
        kernels.fused_axpby_n((1.0,), (v.array,), out.data)
        return out, True

    if kind == "AsScalar":
        return _eval_naive(node.children[0], is_root)

    if kind in ("Add", "Sub"):
        a, a_owned = _eval_naive(node.children[0], False)
        b, b_owned = _eval_naive(node.children[1], False)
        out = _alloc(a.n_rows, a.n_cols, role=role)
        sign = -1.0 if kind == "Sub" else 1.0
        kernels.fused_axpby_n((1.0, sign), (a.data, b.data), out.data)
        if a_owned:
            _free(a)
        if b_owned:
            _free(b)
        return out, True

    if kind == "MatMul":
        a, a_owned = _eval_naive(node.children[0], False)
        b, b_owned = _eval_naive(node.children[1], False)
        out = _alloc(a.n_rows, b.n_cols, role=role)
        kernels.gemm(a.data, b.data, out.data)
        if a_owned:
            _free(a)
        if b_owned:
            _free(b)
        return out, True

    if kind == "Solve":
        a, a_owned = _eval_naive(node.children[0], False)
        b, b_owned = _eval_naive(node.children[1], False)
        out = _alloc(b.n_rows, b.n_cols, role=role)
        np.copyto(out.data, b.data)
        kernels.lu_solve_into(a.data, out.data)
        if a_owned:
            _free(a)
        if b_owned:
            _free(b)
        return out, True

    child, owned = _eval_naive(node.children[0], False)

    if kind == "ScalarMul":
        out = _alloc(child.n_rows, child.n_cols, role=role)
        kernels.fused_axpby_n((node.scalar,), (child.data,), out.data)
    elif kind == "Transpose":
        out = _alloc(child.n_cols, child.n_rows, role=role)
        kernels.transpose_copy(child.data, out.data)
    elif kind == "Inverse":
        out = _alloc(child.n_rows, child.n_cols, role=role)
        kernels.explicit_inverse_into(child.data, out.data)
    elif kind == "DiagMat":
        d = _diag_vector(child.data)
        out = _alloc(d.shape[0], d.shape[0], role=role)
        kernels.diag_materialise(d, out.data)
    elif kind == "Trace":
        col = current_collector()
        if col.active:
            col.add_flops(child.n_rows)
        total = float(np.sum(np.diagonal(child.data)))
        out = _alloc(1, 1, role=role)
        out.data[0, 0] = total
    elif kind == "ColView":
        out = _alloc(child.n_rows, 1, role=role)
        kernels.fused_axpby_n((1.0,), (child.data[:, node.index:node.index + 1],),
                              out.data)
    elif kind == "RowView":
        out = _alloc(1, child.n_cols, role=role)
        kernels.fused_axpby_n((1.0,), (child.data[node.index:node.index + 1, :],),
                              out.data)
    else:
        raise AssertionError(kind)

    if owned:
        _free(child)
    return out, True


def render_expr(node: ExprNode) -> str:
    """Canonical text form: kind(children) with scalars and indices
    inline, leaves numbered by first occurrence, e.g.
    Add(ScalarMul(0.4,Leaf#1),ScalarMul(0.6,Leaf#2)).
    """
    ordinals: dict[int, int] = {}

    def fmt(n: ExprNode) -> str:
        if n.kind == "Leaf":
            key = id(n.value)
            if key not in ordinals:
                ordinals[key] = len(ordinals) + 1
            return f"Leaf#{ordinals[key]}"
        if n.kind == "ScalarMul":
            return f"ScalarMul({n.scalar!r},{fmt(n.children[0])})"
        if n.kind in ("ColView", "RowView"):
            return f"{n.kind}({fmt(n.children[0])},{n.index})"
        args = ",".join(fmt(c) for c in n.children)
        return f"{n.kind}({args})"

    return fmt(node)
