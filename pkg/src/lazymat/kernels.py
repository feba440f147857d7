"""Numerical kernels with instrumentation.

Each public function plays the role of one BLAS/LAPACK-style entry
point.  A kernel call reports one trace event plus a flop count under
the active collector; flops follow the documented nominal formula of
each kernel (stated in its docstring), counting one multiply-add pair
as two operations and a division as one.

Kernels operate on raw numpy arrays.  Output buffers are allocated by
the caller, except for the solve family, which acquires (and frees) an
internal factorisation workspace; those workspace buffers show up as
alloc/free event pairs with role "workspace".  O(n) scratch vectors
inside the compiled loops (pivot indices, multiplier columns) are not
matrix buffers and are not counted.
"""

from __future__ import annotations

import numpy as np

from . import _loops
from .errors import KernelContractError, SingularMatrixError
from .matrix import _alloc, _free
from .trace import current_collector


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise KernelContractError(message)


def fused_axpby_n(coeffs, sources, out) -> None:
    """out = sum_j coeffs[j] * sources[j], one coefficient per source.

    Every output element is accumulated left to right over the terms.
    Up to four terms run as a single fused pass; wider sums continue
    accumulating into ``out`` term by term, which performs the identical
    per-element operation sequence.  flops = 2 * n_elems * n_terms.
    """
    n = len(coeffs)
    _require(n == len(sources) and n >= 1, "fused_axpby_n needs matching non-empty lists")
    shape = out.shape
    for s in sources:
        _require(s.shape == shape, f"fused_axpby_n source shape {s.shape} != out {shape}")
    col = current_collector()
    if col.active:
        col.kernel("fused_axpby_n", f"{shape[0]}x{shape[1]}, terms={n}",
                   flops=2 * shape[0] * shape[1] * n)
    if n == 1:
        _loops._fused1(coeffs[0], sources[0], out)
    elif n == 2:
        _loops._fused2(coeffs[0], sources[0], coeffs[1], sources[1], out)
    elif n == 3:
        _loops._fused3(coeffs[0], sources[0], coeffs[1], sources[1],
                       coeffs[2], sources[2], out)
    elif n == 4:
        _loops._fused4(coeffs[0], sources[0], coeffs[1], sources[1],
                       coeffs[2], sources[2], coeffs[3], sources[3], out)
    else:
        _loops._fused1(coeffs[0], sources[0], out)
        for k in range(1, n):
            _loops._fused_axpy(coeffs[k], sources[k], out)


def gemm(a, b, out, trans_a: bool = False, trans_b: bool = False) -> None:
    """out = op(a) @ op(b); transposition is by index mapping, no copy.

    Reference j-k-i triple loop.  flops = 2*p*q*r for an effective
    (p x q) @ (q x r) product.
    """
    ea = a.T if trans_a else a
    eb = b.T if trans_b else b
    p, q = ea.shape
    q2, r = eb.shape
    _require(q == q2, f"gemm inner dimensions {q} != {q2}")
    _require(out.shape == (p, r), f"gemm out shape {out.shape} != ({p},{r})")
    col = current_collector()
    if col.active:
        detail = f"{p}x{q} * {q}x{r}"
        if trans_a:
            detail += ", trans_a=true"
        if trans_b:
            detail += ", trans_b=true"
        col.kernel("gemm", detail, flops=2 * p * q * r)
    _loops._gemm(ea, eb, out)


def gemv(a, x, out, trans: bool = False) -> None:
    """out = op(a) @ x for 1-D x and out.  flops = 2*p*q."""
    p, q = a.shape
    rows, inner = (q, p) if trans else (p, q)
    _require(x.shape == (inner,), f"gemv x length {x.shape} != {inner}")
    _require(out.shape == (rows,), f"gemv out length {out.shape} != {rows}")
    col = current_collector()
    if col.active:
        detail = f"{rows}x{inner} * {inner}x1"
        if trans:
            detail += ", trans=true"
        col.kernel("gemv", detail, flops=2 * rows * inner)
    if trans:
        _loops._gemv_t(a, x, out)
    else:
        _loops._gemv(a, x, out)


def syrk(a, out) -> None:
    """out = a @ a.T via the upper triangle, mirrored bitwise.

    flops = n*(n+1)*k for a of shape (n, k): one multiply-add pair per
    inner element of each unique row pair.
    """
    n, k = a.shape
    _require(out.shape == (n, n), f"syrk out shape {out.shape} != ({n},{n})")
    col = current_collector()
    if col.active:
        col.kernel("syrk", f"{n}x{k}", flops=n * (n + 1) * k)
    _loops._syrk(a, out)


def diag_scale(d, b, side: str, out) -> None:
    """Multiply by a diagonal matrix held as the 1-D vector d.

    side="left": out[i,j] = d[i]*b[i,j]; side="right": out[i,j] =
    b[i,j]*d[j].  flops = n_elems.
    """
    r, c = b.shape
    _require(out.shape == (r, c), f"diag_scale out shape {out.shape} != {(r, c)}")
    if side == "left":
        _require(d.shape == (r,), f"diag_scale left needs d of length {r}")
    elif side == "right":
        _require(d.shape == (c,), f"diag_scale right needs d of length {c}")
    else:
        raise KernelContractError(f"diag_scale side must be left or right, got {side!r}")
    col = current_collector()
    if col.active:
        col.kernel("diag_scale", f"{r}x{c}, side={side}", flops=r * c)
    if side == "left":
        _loops._diag_scale_left(d, b, out)
    else:
        _loops._diag_scale_right(d, b, out)


def diag_of_product(a, b, out_d) -> None:
    """out_d[i] = sum_k a[i,k]*b[k,i] without forming the product.

    flops = 2*p*q for a of shape (p, q).
    """
    p, q = a.shape
    _require(b.shape == (q, p), f"diag_of_product needs ({q},{p}), got {b.shape}")
    _require(out_d.shape == (p,), f"diag_of_product out length {out_d.shape} != {p}")
    col = current_collector()
    if col.active:
        col.kernel("diag_of_product", f"{p}x{q} * {q}x{p}", flops=2 * p * q)
    _loops._diag_of_product(a, b, out_d)


def trace_of_product(a, b) -> float:
    """sum_i sum_k a[i,k]*b[k,i] as a scalar.  flops = 2*p*q."""
    p, q = a.shape
    _require(b.shape == (q, p), f"trace_of_product needs ({q},{p}), got {b.shape}")
    col = current_collector()
    if col.active:
        col.kernel("trace_of_product", f"{p}x{q} * {q}x{p}", flops=2 * p * q)
    return float(_loops._trace_of_product(a, b))


def triple_diag_dot(a, d, c) -> float:
    """sum_i a[i]*d[i]*c[i] over three equal-length vectors.  flops = 3n."""
    n = a.shape[0]
    _require(d.shape == (n,) and c.shape == (n,),
             "triple_diag_dot needs three equal-length vectors")
    col = current_collector()
    if col.active:
        col.kernel("triple_diag_dot", f"n={n}", flops=3 * n)
    return float(_loops._triple_diag_dot(a, d, c))


def lu_factor(a):
    """PA = LU with partial row pivoting, packed into one matrix.

    Returns (lu, pivots); ``lu`` is a workspace-role DenseMatrix the
    caller is responsible for freeing.  A pivot of exactly zero raises
    SingularMatrixError naming the failing column.  flops = 2*n^3/3
    (nominal, rounded down).
    """
    n = a.shape[0]
    _require(a.shape[1] == n, f"lu_factor needs a square matrix, got {a.shape}")
    col = current_collector()
    if col.active:
        col.kernel("lu_factor", f"{n}x{n}", flops=2 * n * n * n // 3)
    lu = _alloc(n, n, role="workspace")
    np.copyto(lu.data, a)
    piv = np.empty(n, dtype=np.int64)
    rc = _loops._lu_factor(lu.data, piv)
    if rc != 0:
        _free(lu)
        raise SingularMatrixError(
            f"singular matrix: zero pivot in column {rc - 1}", column=rc - 1)
    return lu, piv


def lu_solve_into(a, x) -> None:
    """Solve a @ X = B in place, where x arrives holding B.

    Factors ``a`` (one lu_factor event) then substitutes; the
    substitution phase reports flops = 2*n^2*k nominal for k right-hand
    sides.
    """
    n = a.shape[0]
    _require(x.shape[0] == n, f"lu_solve rhs rows {x.shape[0]} != {n}")
    lu, piv = lu_factor(a)
    k = x.shape[1]
    col = current_collector()
    if col.active:
        col.kernel("lu_solve", f"{n}x{n}, rhs={k}", flops=2 * n * n * k)
    _loops._lu_solve_inplace(lu.data, piv, x)
    _free(lu)


def _band_flops(n: int, k: int, kl: int, ku: int) -> int:
    """Nominal band solve cost: structural trip counts of the packed
    factor and substitution loops, ignoring skipped zero multipliers."""
    kv = kl + ku
    total = 0
    for j in range(n):
        km = min(kl, n - 1 - j)
        w = min(kv, n - 1 - j)
        total += km + 2 * km * w
        total += k * (2 * km + 2 * w + 1)
    return total


def band_solve_into(a, x, kl: int, ku: int) -> None:
    """Solve a banded system in place; x arrives holding B.

    Uses packed band storage of kl+ku+1 diagonals plus kl fill rows and
    banded LU with partial pivoting, so the work is O(n*(kl+ku)^2)
    instead of O(n^3).  flops per _band_flops (documented there).
    """
    n = a.shape[0]
    _require(a.shape[1] == n, f"band_solve needs a square matrix, got {a.shape}")
    _require(x.shape[0] == n, f"band_solve rhs rows {x.shape[0]} != {n}")
    k = x.shape[1]
    col = current_collector()
    if col.active:
        col.kernel("band_solve", f"{n}x{n}, kl={kl}, ku={ku}, rhs={k}",
                   flops=_band_flops(n, k, kl, ku))
    ab = _alloc(2 * kl + ku + 1, n, role="workspace")
    piv = np.empty(n, dtype=np.int64)
    _loops._pack_band(a, ab.data, kl, ku)
    rc = _loops._band_factor(ab.data, piv, kl, ku)
    if rc != 0:
        _free(ab)
        raise SingularMatrixError(
            f"singular matrix: zero pivot in column {rc - 1}", column=rc - 1)
    _loops._band_solve_inplace(ab.data, piv, x, kl, ku)
    _free(ab)


def triangular_solve_into(a, x, upper: bool) -> None:
    """Back or forward substitution in place; x arrives holding B.

    flops = k*n^2 nominal (n divisions plus n*(n-1) multiply-adds per
    right-hand side).
    """
    n = a.shape[0]
    _require(a.shape[1] == n, f"triangular_solve needs a square matrix, got {a.shape}")
    _require(x.shape[0] == n, f"triangular_solve rhs rows {x.shape[0]} != {n}")
    k = x.shape[1]
    col = current_collector()
    if col.active:
        col.kernel("triangular_solve",
                   f"{n}x{n}, upper={'true' if upper else 'false'}, rhs={k}",
                   flops=k * n * n)
    rc = _loops._tri_solve_inplace(a, x, upper)
    if rc != 0:
        raise SingularMatrixError(
            f"singular triangular matrix: zero diagonal in column {rc - 1}",
            column=rc - 1)


def explicit_inverse_into(a, out) -> None:
    """out = a^-1 by factoring and solving against the identity.

    Exists for the naive evaluation arm; the rewrite engine turns
    inverse-multiplies into solves instead.  The substitution phase
    reports flops = 2*n^3 (n right-hand sides) on top of the factor.
    """
    n = a.shape[0]
    _require(a.shape == (n, n) and out.shape == (n, n),
             "explicit_inverse needs square a and out of the same shape")
    lu, piv = lu_factor(a)
    col = current_collector()
    if col.active:
        col.kernel("explicit_inverse", f"{n}x{n}", flops=2 * n * n * n)
    out[:] = 0.0
    np.fill_diagonal(out, 1.0)
    _loops._lu_solve_inplace(lu.data, piv, out)
    _free(lu)


def transpose_copy(a, out) -> None:
    """out = a.T as an explicit copy.  Pure data movement, flops = 0."""
    r, c = a.shape
    _require(out.shape == (c, r), f"transpose_copy out shape {out.shape} != {(c, r)}")
    col = current_collector()
    if col.active:
        col.kernel("transpose_copy", f"{c}x{r}")
    _loops._transpose_copy(a, out)


def diag_materialise(d, out) -> None:
    """Dense n x n matrix with d on the diagonal.

    Writes every element, zeros included.  Pure data movement, flops = 0.
    """
    n = out.shape[0]
    _require(out.shape == (n, n), f"diag_materialise needs square out, got {out.shape}")
    _require(d.shape == (n,), f"diag_materialise d length {d.shape} != {n}")
    col = current_collector()
    if col.active:
        col.kernel("diag_materialise", f"{n}x{n}")
    _loops._diag_materialise(d, out)
