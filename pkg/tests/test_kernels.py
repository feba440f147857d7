"""Numerical kernels against brute-force oracles, plus flop accounting."""

import numpy as np
import pytest

from lazymat import KernelContractError, SingularMatrixError, kernels, with_trace


def _f(a):
    return np.asfortranarray(np.asarray(a, dtype=np.float64))


def _rand(rng, r, c):
    return np.asfortranarray(rng.random((r, c)))


def _dense_mul(a, b):
    """Shared brute-force multiplier; every product-flavoured kernel is
    checked against this one reference."""
    n, k = a.shape
    _, m = b.shape
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def _boosted(rng, n):
    a = rng.random((n, n))
    a[np.diag_indices(n)] += n
    return np.asfortranarray(a)


# ---------------------------------------------------------------------------
# correctness against the shared oracle
# ---------------------------------------------------------------------------

def test_gemm_against_oracle():
    rng = np.random.default_rng(1)
    for _ in range(25):
        p, q, r = rng.integers(1, 21, size=3)
        a, b = _rand(rng, p, q), _rand(rng, q, r)
        out = np.zeros((p, r), order="F")
        kernels.gemm(a, b, out)
        ref = _dense_mul(a, b)
        np.testing.assert_allclose(out, ref, rtol=1e-13, atol=1e-30)


def test_gemm_transpose_flags():
    rng = np.random.default_rng(2)
    a = _rand(rng, 6, 4)
    b = _rand(rng, 5, 6)
    out = np.zeros((4, 5), order="F")
    kernels.gemm(a, b, out, trans_a=True, trans_b=True)
    np.testing.assert_allclose(out, _dense_mul(a.T, b.T), rtol=1e-13)


def test_gemv_both_ways():
    rng = np.random.default_rng(3)
    a = _rand(rng, 7, 4)
    x = np.ascontiguousarray(rng.random(4))
    y = np.zeros(7)
    kernels.gemv(a, x, y)
    np.testing.assert_allclose(y, _dense_mul(a, x.reshape(-1, 1))[:, 0],
                               rtol=1e-13)
    xt = np.ascontiguousarray(rng.random(7))
    yt = np.zeros(4)
    kernels.gemv(a, xt, yt, trans=True)
    np.testing.assert_allclose(yt, _dense_mul(a.T, xt.reshape(-1, 1))[:, 0],
                               rtol=1e-13)


def test_syrk_against_oracle_and_bitwise_symmetry():
    rng = np.random.default_rng(4)
    for _ in range(10):
        n, k = rng.integers(1, 21, size=2)
        a = _rand(rng, n, k)
        out = np.zeros((n, n), order="F")
        kernels.syrk(a, out)
        np.testing.assert_allclose(out, _dense_mul(a, a.T), rtol=1e-13,
                                   atol=1e-30)
        # element(i,j) must equal element(j,i) down to the last bit
        assert np.array_equal(out, out.T)


def test_diag_scale_both_sides():
    rng = np.random.default_rng(5)
    d = np.ascontiguousarray(rng.random(6))
    b = _rand(rng, 6, 9)
    out = np.zeros((6, 9), order="F")
    kernels.diag_scale(d, b, "left", out)
    np.testing.assert_allclose(out, _dense_mul(np.diag(d), b), rtol=1e-13)
    c = _rand(rng, 9, 6)
    out2 = np.zeros((9, 6), order="F")
    kernels.diag_scale(d, c, "right", out2)
    np.testing.assert_allclose(out2, _dense_mul(c, np.diag(d)), rtol=1e-13)


def test_diag_of_product_and_trace_of_product():
    rng = np.random.default_rng(6)
    a = _rand(rng, 8, 13)
    b = _rand(rng, 13, 8)
    full = _dense_mul(a, b)
    d = np.zeros(8)
    kernels.diag_of_product(a, b, d)
    np.testing.assert_allclose(d, np.diagonal(full), rtol=1e-13)
    t = kernels.trace_of_product(a, b)
    np.testing.assert_allclose(t, np.trace(full), rtol=1e-13)


def test_triple_diag_dot():
    rng = np.random.default_rng(7)
    a = np.ascontiguousarray(rng.random(11))
    d = np.ascontiguousarray(rng.random(11))
    c = np.ascontiguousarray(rng.random(11))
    got = kernels.triple_diag_dot(a, d, c)
    ref = _dense_mul(_dense_mul(a.reshape(1, -1), np.diag(d)),
                     c.reshape(-1, 1))[0, 0]
    np.testing.assert_allclose(got, ref, rtol=1e-13)
    # worked tiny case: (1,2) diag(3,4) (5,6) = 1*3*5 + 2*4*6
    assert kernels.triple_diag_dot(
        np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.array([5.0, 6.0])
    ) == 63.0


def test_fused_axpby_many_terms():
    rng = np.random.default_rng(8)
    srcs = [_rand(rng, 5, 3) for _ in range(6)]
    coeffs = [0.5, -1.0, 2.0, 0.25, 1.0, -0.75]
    out = np.zeros((5, 3), order="F")
    kernels.fused_axpby_n(coeffs, srcs, out)
    ref = sum(c * s for c, s in zip(coeffs, srcs))
    np.testing.assert_allclose(out, ref, rtol=1e-13)


def test_transpose_copy_and_diag_materialise():
    rng = np.random.default_rng(9)
    a = _rand(rng, 3, 5)
    out = np.zeros((5, 3), order="F")
    kernels.transpose_copy(a, out)
    assert np.array_equal(out, a.T)
    d = np.array([1.0, 2.0, 3.0])
    m = np.ones((3, 3), order="F")
    kernels.diag_materialise(d, m)
    assert np.array_equal(m, np.diag(d))


# ---------------------------------------------------------------------------
# factorisations and solvers
# ---------------------------------------------------------------------------

def test_lu_reassembles_pa():
    rng = np.random.default_rng(10)
    for n in (1, 2, 5, 12, 30):
        a = _rand(rng, n, n)
        lu, piv = kernels.lu_factor(a)
        low = np.tril(lu.data, -1) + np.eye(n)
        up = np.triu(lu.data)
        p = np.eye(n)
        for k_idx, p_idx in enumerate(piv):
            p[[k_idx, p_idx]] = p[[p_idx, k_idx]]
        np.testing.assert_allclose(p @ a, low @ up, rtol=1e-12, atol=1e-14)


def test_lu_solve_residual_bound():
    rng = np.random.default_rng(11)
    for n in (5, 20, 50, 100):
        a = _boosted(rng, n)
        b = _rand(rng, n, 3)
        x = np.array(b, order="F")
        kernels.lu_solve_into(a, x)
        resid = np.linalg.norm(a @ x - b, np.inf)
        bound = 1e-10 * (np.linalg.norm(a, np.inf) * np.linalg.norm(x, np.inf)
                         + np.linalg.norm(b, np.inf))
        assert resid <= bound


def test_singular_pivot_reported_with_column():
    a = np.zeros((3, 3), order="F")
    a[0, 0] = 1.0
    a[2, 2] = 1.0  # column 1 is entirely zero

    def attempt():
        try:
            kernels.lu_factor(a)
        except SingularMatrixError as e:
            return e
        return None

    tr = with_trace(attempt)
    assert tr.result is not None
    assert tr.result.column == 1
    # the workspace grabbed before the failure must be released
    allocs = [e for e in tr.events if e.kind == "alloc"]
    frees = [e for e in tr.events if e.kind == "free"]
    assert len(allocs) == len(frees) == 1


def test_band_solve_matches_dense_on_500_systems():
    """Random banded systems with kl, ku <= 3 agree with dense LU."""
    rng = np.random.default_rng(12)
    for _ in range(500):
        n = int(rng.integers(4, 28))
        kl = int(rng.integers(0, 4))
        ku = int(rng.integers(0, 4))
        a = rng.random((n, n))
        i, j = np.indices((n, n))
        a[(i - j > kl) | (j - i > ku)] = 0.0
        a[np.diag_indices(n)] += n
        a = np.asfortranarray(a)
        b = _rand(rng, n, 2)
        xb = np.array(b, order="F")
        kernels.band_solve_into(a, xb, kl, ku)
        xd = np.array(b, order="F")
        kernels.lu_solve_into(a, xd)
        np.testing.assert_allclose(xb, xd, rtol=1e-12, atol=1e-14)


def test_triangular_solve_both_orientations():
    rng = np.random.default_rng(13)
    n = 9
    up = np.triu(rng.random((n, n))) + np.eye(n) * n
    lo = np.tril(rng.random((n, n))) + np.eye(n) * n
    b = _rand(rng, n, 4)
    xu = np.array(b, order="F")
    kernels.triangular_solve_into(_f(up), xu, upper=True)
    np.testing.assert_allclose(up @ xu, b, rtol=1e-12)
    xl = np.array(b, order="F")
    kernels.triangular_solve_into(_f(lo), xl, upper=False)
    np.testing.assert_allclose(lo @ xl, b, rtol=1e-12)


def test_explicit_inverse_matches_numpy():
    rng = np.random.default_rng(14)
    a = _boosted(rng, 17)
    out = np.zeros((17, 17), order="F")
    kernels.explicit_inverse_into(a, out)
    np.testing.assert_allclose(out, np.linalg.inv(a), rtol=1e-11)


# ---------------------------------------------------------------------------
# flop accounting: every kernel reports its documented formula exactly
# ---------------------------------------------------------------------------

def _flops_of(thunk):
    tr = with_trace(thunk)
    return tr.counters.flops, tr.counters.kernel_calls


def test_flop_formulas():
    rng = np.random.default_rng(15)
    p, q, r = 6, 7, 8
    a, b = _rand(rng, p, q), _rand(rng, q, r)

    fl, calls = _flops_of(lambda: kernels.gemm(a, b, np.zeros((p, r), order="F")))
    assert (fl, calls) == (2 * p * q * r, 1)

    x = np.ascontiguousarray(rng.random(q))
    fl, _ = _flops_of(lambda: kernels.gemv(a, x, np.zeros(p)))
    assert fl == 2 * p * q

    s = _rand(rng, 5, 9)
    fl, _ = _flops_of(lambda: kernels.syrk(s, np.zeros((5, 5), order="F")))
    assert fl == 5 * 6 * 9  # n (n+1) k

    d6 = np.ascontiguousarray(rng.random(p))
    fl, _ = _flops_of(
        lambda: kernels.diag_scale(d6, a, "left", np.zeros((p, q), order="F")))
    assert fl == p * q

    ba = _rand(rng, r, q)
    fl, _ = _flops_of(lambda: kernels.diag_of_product(b, ba, np.zeros(q)))
    assert fl == 2 * q * r

    fl, _ = _flops_of(lambda: kernels.trace_of_product(b, ba))
    assert fl == 2 * q * r

    v = np.ascontiguousarray(rng.random(10))
    fl, _ = _flops_of(lambda: kernels.triple_diag_dot(v, v, v))
    assert fl == 30

    srcs = [_rand(rng, 4, 4) for _ in range(3)]
    fl, _ = _flops_of(
        lambda: kernels.fused_axpby_n([1.0, 2.0, 3.0], srcs,
                                      np.zeros((4, 4), order="F")))
    assert fl == 2 * 16 * 3

    fl, _ = _flops_of(
        lambda: kernels.transpose_copy(a, np.zeros((q, p), order="F")))
    assert fl == 0
    fl, _ = _flops_of(
        lambda: kernels.diag_materialise(d6, np.zeros((p, p), order="F")))
    assert fl == 0


def test_solver_flop_formulas():
    rng = np.random.default_rng(16)
    n, k = 12, 3
    a = _boosted(rng, n)
    b = _rand(rng, n, k)

    def run_lu():
        lu, _ = kernels.lu_factor(a)
        from lazymat.matrix import _free
        _free(lu)

    fl, calls = _flops_of(run_lu)
    assert (fl, calls) == (2 * n * n * n // 3, 1)

    fl, calls = _flops_of(lambda: kernels.lu_solve_into(a, np.array(b, order="F")))
    assert fl == 2 * n * n * n // 3 + 2 * n * n * k
    assert calls == 2  # factor step and substitution step are separate events

    fl, calls = _flops_of(
        lambda: kernels.explicit_inverse_into(a, np.zeros((n, n), order="F")))
    assert fl == 2 * n * n * n // 3 + 2 * n * n * n
    assert calls == 2

    fl, _ = _flops_of(
        lambda: kernels.triangular_solve_into(
            _f(np.triu(a)), np.array(b, order="F"), upper=True))
    assert fl == k * n * n

    kl = ku = 1
    tri = np.array(a)
    i, j = np.indices((n, n))
    tri[abs(i - j) > 1] = 0.0
    expect = 0
    for jj in range(n):
        km = min(kl, n - 1 - jj)
        w = min(kl + ku, n - 1 - jj)
        expect += km + 2 * km * w + k * (2 * km + 2 * w + 1)
    fl, _ = _flops_of(
        lambda: kernels.band_solve_into(_f(tri), np.array(b, order="F"), kl, ku))
    assert fl == expect


def test_band_solve_is_linear_in_n():
    # nominal cost for fixed bandwidth grows like n, not n^3
    c1 = kernels._band_flops(100, 1, 1, 1)
    c2 = kernels._band_flops(200, 1, 1, 1)
    assert c2 < 2.5 * c1


def test_contract_violations_raise():
    rng = np.random.default_rng(17)
    a = _rand(rng, 3, 4)
    b = _rand(rng, 3, 4)  # inner dimensions do not match
    with pytest.raises(KernelContractError):
        kernels.gemm(a, b, np.zeros((3, 4), order="F"))
    with pytest.raises(KernelContractError):
        kernels.diag_scale(np.zeros(2), a, "left", np.zeros((3, 4), order="F"))
    with pytest.raises(KernelContractError):
        kernels.fused_axpby_n([1.0], [], np.zeros((2, 2), order="F"))
