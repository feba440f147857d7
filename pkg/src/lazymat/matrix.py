"""Dense column-major matrix storage, views, and structure analysis.

The storage type is a 64-bit real matrix held in Fortran (column-major)
order, so ``element(i, j)`` is ``data[i + j*n_rows]`` in the underlying
buffer.  Every allocated buffer gets a unique monotonically increasing
id; copies get fresh ids, because the id identifies storage rather than
value (the rewrite engine keys one of its detections on storage
identity).

Views are offset/extent windows over a base matrix, with an optional
transposed flag that swaps index roles on read.  No view ever copies
data, and mutations of the base are visible through the view.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import _loops
from .errors import DimensionError, LengthError
from .trace import current_collector

__all__ = [
    "DenseMatrix",
    "MatrixView",
    "StructureInfo",
    "make_matrix",
    "col_view",
    "row_view",
    "analyze_structure",
]

_ids = itertools.count(1)


class _AlgebraMixin:
    """Operator sugar shared by matrices, views and expression nodes.

    All operators build expression trees; nothing is computed until the
    tree is evaluated.
    """

    def __add__(self, other):
        from .expr import add

        return add(self, other)

    def __sub__(self, other):
        from .expr import sub

        return sub(self, other)

    def __mul__(self, other):
        from .expr import matmul, smul

        if isinstance(other, (int, float)):
            return smul(float(other), self)
        return matmul(self, other)

    def __rmul__(self, other):
        from .expr import smul

        if isinstance(other, (int, float)):
            return smul(float(other), self)
        return NotImplemented

    def __matmul__(self, other):
        from .expr import matmul

        return matmul(self, other)

    def __neg__(self):
        from .expr import smul

        return smul(-1.0, self)

    @property
    def T(self):
        from .expr import transpose

        return transpose(self)


class DenseMatrix(_AlgebraMixin):
    """Column-major dense matrix of float64 elements.

    ``data`` is a 2-D Fortran-ordered numpy array; its buffer is the
    column-major element sequence of length ``n_rows * n_cols``.
    """

    __slots__ = ("data", "id", "role")

    def __init__(self, data, role: str = "matrix"):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"matrix data must be 2-D, got {arr.ndim}-D")
        self.data = np.asfortranarray(arr)
        self.id = next(_ids)
        self.role = role
        current_collector().alloc(role, self.data.shape, self.id)

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def element(self, i: int, j: int) -> float:
        if not (0 <= i < self.n_rows and 0 <= j < self.n_cols):
            raise IndexError(
                f"element ({i},{j}) out of range for {self.n_rows}x{self.n_cols}"
            )
        return float(self.data[i, j])

    def to_values(self) -> list:
        """Column-major flat list of all elements."""
        return [float(v) for v in self.data.ravel(order="F")]

    def copy(self) -> "DenseMatrix":
        """Deep copy with a fresh storage id."""
        return DenseMatrix(self.data.copy(order="F"), role=self.role)

    def debug_format(self) -> str:
        """Rows top to bottom, 17 significant digits per element.

        17 digits round-trip any float64, so parsing this text back
        reproduces the matrix exactly.
        """
        return "\n".join(
            " ".join(f"{self.data[i, j]:.17g}" for j in range(self.n_cols))
            for i in range(self.n_rows)
        )

    def __repr__(self) -> str:
        return f"DenseMatrix({self.n_rows}x{self.n_cols}, id={self.id})"


def _alloc(n_rows: int, n_cols: int, role: str = "temp") -> DenseMatrix:
    """Acquire an uninitialised buffer; the caller must fill every element."""
    return DenseMatrix(np.empty((n_rows, n_cols), order="F"), role=role)


def _free(m: DenseMatrix) -> None:
    """Record that a temporary buffer is done with.

    Actual memory release is the garbage collector's job; this exists so
    traces show the allocate/free balance of an evaluation.
    """
    current_collector().free(m.role, m.data.shape, m.id)


class MatrixView(_AlgebraMixin):
    """Window into a DenseMatrix; optionally transposed, never a copy.

    ``n_rows``/``n_cols`` are the extents of the window in base
    coordinates; when ``transposed`` is set the view's logical shape is
    the swap of those extents, and ``element(i, j)`` swaps its indices
    before delegating to the base.
    """

    __slots__ = ("base", "row_offset", "col_offset", "n_rows", "n_cols", "transposed")

    def __init__(self, base: DenseMatrix, row_offset: int, col_offset: int,
                 n_rows: int, n_cols: int, transposed: bool = False):
        if row_offset + n_rows > base.n_rows or col_offset + n_cols > base.n_cols:
            raise IndexError(
                f"view {n_rows}x{n_cols} at ({row_offset},{col_offset}) exceeds "
                f"base {base.n_rows}x{base.n_cols}"
            )
        self.base = base
        self.row_offset = row_offset
        self.col_offset = col_offset
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.transposed = transposed

    @property
    def shape(self) -> tuple:
        if self.transposed:
            return (self.n_cols, self.n_rows)
        return (self.n_rows, self.n_cols)

    @property
    def array(self):
        """Strided numpy view of the window (transposition applied)."""
        a = self.base.data[
            self.row_offset:self.row_offset + self.n_rows,
            self.col_offset:self.col_offset + self.n_cols,
        ]
        return a.T if self.transposed else a

    def element(self, i: int, j: int) -> float:
        if self.transposed:
            i, j = j, i
        if not (0 <= i < self.n_rows and 0 <= j < self.n_cols):
            raise IndexError(f"view element out of range")
        return self.base.element(self.row_offset + i, self.col_offset + j)

    def transpose_view(self) -> "MatrixView":
        """The same window with the transposed flag flipped."""
        return MatrixView(self.base, self.row_offset, self.col_offset,
                          self.n_rows, self.n_cols, not self.transposed)

    def __repr__(self) -> str:
        r, c = self.shape
        return (f"MatrixView({r}x{c} of id={self.base.id}"
                f"{', transposed' if self.transposed else ''})")


@dataclass(frozen=True)
class StructureInfo:
    """Run-time detected properties of a matrix.

    Bandwidths are the largest sub/super-diagonal distances that carry a
    nonzero element (an all-zero matrix reports 0 for both).  Symmetry
    and the band/triangular zero tests use exact value comparison; no
    tolerance is applied, because a false positive here would change
    numerical results rather than just performance.
    """

    is_square: bool
    lower_bandwidth: int
    upper_bandwidth: int
    is_upper_triangular: bool
    is_lower_triangular: bool
    is_symmetric: bool


def make_matrix(n_rows: int, n_cols: int, fill: str = "zeros", *,
                seed=None, values=None) -> DenseMatrix:
    """Create a matrix with one of the supported fills.

    fill:
      - "zeros": all elements 0.
      - "identity": square identity; DimensionError on non-square shape.
      - "random": i.i.d. uniform on [0, 1); requires ``seed`` so results
        are reproducible.
      - "values": take ``values`` in column-major order; LengthError if
        the sequence length is not n_rows*n_cols.
    """
    if n_rows < 0 or n_cols < 0:
        raise DimensionError("matrix dimensions must be non-negative")
    if fill == "zeros":
        arr = np.zeros((n_rows, n_cols), order="F")
    elif fill == "identity":
        if n_rows != n_cols:
            raise DimensionError(
                f"identity fill needs a square shape, got {n_rows}x{n_cols}"
            )
        arr = np.eye(n_rows, order="F")
    elif fill == "random":
        if seed is None:
            raise ValueError("random fill requires a seed")
        rng = np.random.default_rng(seed)
        arr = np.asfortranarray(rng.random((n_rows, n_cols)))
    elif fill == "values":
        if values is None:
            raise ValueError("values fill requires a value sequence")
        flat = np.asarray(list(values), dtype=np.float64)
        if flat.size != n_rows * n_cols:
            raise LengthError(
                f"expected {n_rows * n_cols} values, got {flat.size}"
            )
        arr = flat.reshape((n_rows, n_cols), order="F")
    else:
        raise ValueError(f"unknown fill {fill!r}")
    return DenseMatrix(arr)


def col_view(m: DenseMatrix, j: int) -> MatrixView:
    """Column ``j`` of ``m`` as an n_rows x 1 view (no copy)."""
    if not 0 <= j < m.n_cols:
        raise IndexError(f"column {j} out of range for {m.n_rows}x{m.n_cols}")
    return MatrixView(m, 0, j, m.n_rows, 1)


def row_view(m: DenseMatrix, i: int) -> MatrixView:
    """Row ``i`` of ``m`` as a 1 x n_cols view (no copy)."""
    if not 0 <= i < m.n_rows:
        raise IndexError(f"row {i} out of range for {m.n_rows}x{m.n_cols}")
    return MatrixView(m, i, 0, 1, m.n_cols)


def analyze_structure(m) -> StructureInfo:
    """Scan a matrix once and report its structural properties.

    Accepts a DenseMatrix, MatrixView, or a 2-D numpy array.  Non-square
    matrices report square/triangular/symmetric all false, with
    bandwidths computed over the rectangular index set.
    """
    if isinstance(m, DenseMatrix):
        arr = m.data
    elif isinstance(m, MatrixView):
        arr = np.asfortranarray(m.array)
    else:
        arr = np.asarray(m, dtype=np.float64)
    rows, cols = arr.shape
    square = rows == cols
    lbw, ubw, sym = _loops._analyze(arr, square)
    return StructureInfo(
        is_square=square,
        lower_bandwidth=int(lbw),
        upper_bandwidth=int(ubw),
        is_upper_triangular=square and lbw == 0,
        is_lower_triangular=square and ubw == 0,
        is_symmetric=square and bool(sym),
    )
