"""Compiled loop nests behind the public kernels.

Everything here is a plain reference implementation jitted with numba.
The loop orders are chosen for column-major data and written so the
accumulation order per output element is fixed (left to right over the
inner dimension), which keeps results bitwise deterministic for a given
set of operands.  No function in this module touches the trace layer;
the wrappers in ``kernels`` handle instrumentation and contract checks.
"""

import numba as nb
import numpy as np


@nb.njit(cache=True)
def _analyze(A, square):
    """One pass over all elements: bandwidths plus exact symmetry."""
    rows, cols = A.shape
    lbw = 0
    ubw = 0
    sym = True
    for j in range(cols):
        for i in range(rows):
            v = A[i, j]
            if v != 0.0:
                d = i - j
                if d > 0:
                    if d > lbw:
                        lbw = d
                elif -d > ubw:
                    ubw = -d
            if square and i < j and v != A[j, i]:
                sym = False
    return lbw, ubw, sym


@nb.njit(cache=True)
def _fused1(c0, s0, out):
    r, c = out.shape
    for j in range(c):
        for i in range(r):
            out[i, j] = c0 * s0[i, j]


@nb.njit(cache=True)
def _fused2(c0, s0, c1, s1, out):
    r, c = out.shape
    for j in range(c):
        for i in range(r):
            acc = c0 * s0[i, j]
            acc = acc + c1 * s1[i, j]
            out[i, j] = acc


@nb.njit(cache=True)
def _fused3(c0, s0, c1, s1, c2, s2, out):
    r, c = out.shape
    for j in range(c):
        for i in range(r):
            acc = c0 * s0[i, j]
            acc = acc + c1 * s1[i, j]
            acc = acc + c2 * s2[i, j]
            out[i, j] = acc


@nb.njit(cache=True)
def _fused4(c0, s0, c1, s1, c2, s2, c3, s3, out):
    r, c = out.shape
    for j in range(c):
        for i in range(r):
            acc = c0 * s0[i, j]
            acc = acc + c1 * s1[i, j]
            acc = acc + c2 * s2[i, j]
            acc = acc + c3 * s3[i, j]
            out[i, j] = acc


@nb.njit(cache=True)
def _fused_axpy(ck, sk, out):
    """out += ck*sk; continues the per-element left-to-right accumulation."""
    r, c = out.shape
    for j in range(c):
        for i in range(r):
            out[i, j] = out[i, j] + ck * sk[i, j]


@nb.njit(cache=True)
def _gemm(A, B, out):
    """out = A @ B, j-k-i loop order over column-major data."""
    p, q = A.shape
    r = B.shape[1]
    for j in range(r):
        for i in range(p):
            out[i, j] = 0.0
        for k in range(q):
            b = B[k, j]
            for i in range(p):
                out[i, j] += A[i, k] * b


@nb.njit(cache=True)
def _gemv(A, x, out):
    """out = A @ x for a 1-D x, streaming columns of A."""
    p, q = A.shape
    for i in range(p):
        out[i] = 0.0
    for k in range(q):
        xk = x[k]
        for i in range(p):
            out[i] += A[i, k] * xk


@nb.njit(cache=True)
def _gemv_t(A, x, out):
    """out = A.T @ x for a 1-D x; every column dot is stride-1."""
    p, q = A.shape
    for j in range(q):
        acc = 0.0
        for k in range(p):
            acc += A[k, j] * x[k]
        out[j] = acc


@nb.njit(cache=True)
def _syrk(A, out):
    """out = A @ A.T; computes the upper triangle, mirrors the lower.

    The mirror is a bit copy, so out[i, j] == out[j, i] exactly.
    """
    n = A.shape[0]
    k = A.shape[1]
    for j in range(n):
        for i in range(j + 1):
            out[i, j] = 0.0
        for t in range(k):
            a_jt = A[j, t]
            for i in range(j + 1):
                out[i, j] += A[i, t] * a_jt
    for j in range(n):
        for i in range(j + 1, n):
            out[i, j] = out[j, i]


@nb.njit(cache=True)
def _diag_scale_left(d, B, out):
    r, c = B.shape
    for j in range(c):
        for i in range(r):
            out[i, j] = d[i] * B[i, j]


@nb.njit(cache=True)
def _diag_scale_right(d, B, out):
    r, c = B.shape
    for j in range(c):
        dj = d[j]
        for i in range(r):
            out[i, j] = B[i, j] * dj


@nb.njit(cache=True)
def _diag_of_product(A, B, out_d):
    """out_d[i] = sum_k A[i,k]*B[k,i], k ascending per element.

    Rows of A are walked in blocks of 8 so both operands stream through
    cache; per element the accumulation order is still plain ascending k.
    """
    p = A.shape[0]
    q = A.shape[1]
    for i0 in range(0, p, 8):
        ihi = min(i0 + 8, p)
        for i in range(i0, ihi):
            out_d[i] = 0.0
        for k in range(q):
            for i in range(i0, ihi):
                out_d[i] += A[i, k] * B[k, i]


@nb.njit(cache=True)
def _trace_of_product(A, B):
    """sum_i sum_k A[i,k]*B[k,i]; the outer sum runs in ascending i."""
    p = A.shape[0]
    d = np.empty(p, dtype=np.float64)
    _diag_of_product(A, B, d)
    acc = 0.0
    for i in range(p):
        acc += d[i]
    return acc


@nb.njit(cache=True)
def _triple_diag_dot(a, d, c):
    n = a.shape[0]
    acc = 0.0
    for i in range(n):
        acc += a[i] * d[i] * c[i]
    return acc


@nb.njit(cache=True)
def _lu_factor(LU, piv):
    """In-place LU with partial row pivoting.

    Returns 0 on success, or (failing column + 1) when a pivot is
    exactly zero.  Multipliers are copied into a local scratch column
    before the trailing update so the compiler can prove the update
    loops alias-free.
    """
    n = LU.shape[0]
    scratch = np.empty(n, dtype=np.float64)
    for k in range(n):
        p = k
        best = abs(LU[k, k])
        for i in range(k + 1, n):
            v = abs(LU[i, k])
            if v > best:
                best = v
                p = i
        piv[k] = p
        if LU[p, k] == 0.0:
            return k + 1
        if p != k:
            for j in range(n):
                t = LU[k, j]
                LU[k, j] = LU[p, j]
                LU[p, j] = t
        pv = LU[k, k]
        for i in range(k + 1, n):
            m = LU[i, k] / pv
            LU[i, k] = m
            scratch[i] = m
        for j in range(k + 1, n):
            f = LU[k, j]
            for i in range(k + 1, n):
                LU[i, j] -= scratch[i] * f
    return 0


@nb.njit(cache=True)
def _lu_solve_inplace(LU, piv, X):
    """Forward/back substitution for every column of X, in place."""
    n = LU.shape[0]
    m = X.shape[1]
    for col in range(m):
        for i in range(n):
            p = piv[i]
            if p != i:
                t = X[i, col]
                X[i, col] = X[p, col]
                X[p, col] = t
        for j in range(n):
            yj = X[j, col]
            for i in range(j + 1, n):
                X[i, col] -= LU[i, j] * yj
        for j in range(n - 1, -1, -1):
            X[j, col] /= LU[j, j]
            xj = X[j, col]
            for i in range(j):
                X[i, col] -= LU[i, j] * xj


@nb.njit(cache=True)
def _pack_band(A, AB, kl, ku):
    """Copy the band of A into banded storage with kl fill rows on top.

    A(i, j) lands in AB[kl + ku + i - j, j]; rows 0..kl-1 hold fill
    created by pivoting during factorisation.
    """
    n = A.shape[0]
    kv = kl + ku
    rows = AB.shape[0]
    for j in range(n):
        for r in range(rows):
            AB[r, j] = 0.0
    for j in range(n):
        lo = j - ku
        if lo < 0:
            lo = 0
        hi = j + kl
        if hi > n - 1:
            hi = n - 1
        for i in range(lo, hi + 1):
            AB[kv + i - j, j] = A[i, j]


@nb.njit(cache=True)
def _band_factor(AB, piv, kl, ku):
    """Banded LU with partial pivoting on packed storage.

    Returns 0 on success or (failing column + 1) on an exact zero pivot.
    Pivoting only ever swaps within the kl rows below the diagonal, so
    fill stays inside the kl extra rows of the packed layout.
    """
    n = AB.shape[1]
    kv = kl + ku
    ju = 0
    for j in range(n):
        km = kl
        if km > n - 1 - j:
            km = n - 1 - j
        jp = 0
        best = abs(AB[kv, j])
        for t in range(1, km + 1):
            v = abs(AB[kv + t, j])
            if v > best:
                best = v
                jp = t
        piv[j] = j + jp
        if AB[kv + jp, j] == 0.0:
            return j + 1
        cand = j + ku + jp
        if cand > ju:
            ju = cand
        if ju > n - 1:
            ju = n - 1
        if jp != 0:
            for jj in range(j, ju + 1):
                t1 = AB[kv + j - jj, jj]
                AB[kv + j - jj, jj] = AB[kv + j + jp - jj, jj]
                AB[kv + j + jp - jj, jj] = t1
        if km > 0:
            pv = AB[kv, j]
            for t in range(1, km + 1):
                AB[kv + t, j] /= pv
            for jj in range(j + 1, ju + 1):
                f = AB[kv + j - jj, jj]
                if f != 0.0:
                    for t in range(1, km + 1):
                        AB[kv + j - jj + t, jj] -= AB[kv + t, j] * f
    return 0


@nb.njit(cache=True)
def _band_solve_inplace(AB, piv, X, kl, ku):
    """Substitution phase against a factorisation from _band_factor."""
    n = AB.shape[1]
    kv = kl + ku
    m = X.shape[1]
    for col in range(m):
        for j in range(n):
            p = piv[j]
            if p != j:
                t1 = X[j, col]
                X[j, col] = X[p, col]
                X[p, col] = t1
            km = kl
            if km > n - 1 - j:
                km = n - 1 - j
            xj = X[j, col]
            if xj != 0.0:
                for t in range(1, km + 1):
                    X[j + t, col] -= AB[kv + t, j] * xj
        for j in range(n - 1, -1, -1):
            u = kv
            if u > n - 1 - j:
                u = n - 1 - j
            acc = X[j, col]
            for t in range(1, u + 1):
                acc -= AB[kv - t, j + t] * X[j + t, col]
            X[j, col] = acc / AB[kv, j]


@nb.njit(cache=True)
def _tri_solve_inplace(A, X, upper):
    """Back or forward substitution; returns failing column + 1 on a
    zero diagonal entry, else 0."""
    n = A.shape[0]
    m = X.shape[1]
    for j in range(n):
        if A[j, j] == 0.0:
            return j + 1
    if upper:
        for col in range(m):
            for j in range(n - 1, -1, -1):
                X[j, col] /= A[j, j]
                xj = X[j, col]
                if xj != 0.0:
                    for i in range(j):
                        X[i, col] -= A[i, j] * xj
    else:
        for col in range(m):
            for j in range(n):
                X[j, col] /= A[j, j]
                xj = X[j, col]
                if xj != 0.0:
                    for i in range(j + 1, n):
                        X[i, col] -= A[i, j] * xj
    return 0


@nb.njit(cache=True)
def _transpose_copy(A, out):
    r, c = A.shape
    for j in range(r):
        for i in range(c):
            out[i, j] = A[j, i]


@nb.njit(cache=True)
def _diag_materialise(d, out):
    """Dense diagonal matrix: every off-diagonal element is written too."""
    n = out.shape[0]
    for j in range(n):
        for i in range(n):
            out[i, j] = 0.0
    for i in range(n):
        out[i, i] = d[i]
