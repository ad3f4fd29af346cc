import numpy as np
import pytest
import scipy.sparse as sp

from sparse_linalg import (
    ConvergenceError,
    DimensionError,
    NotSPDError,
    SolverError,
    SpdFactor,
    as_csr,
    conjugate_gradient,
    solve_spd,
    spmv,
    symmetry_defect,
    transpose,
    weighted_inv_norm_sq,
    weighted_norm_sq,
)


def _random_spd(rng, n):
    B = rng.standard_normal((n, n))
    return B.T @ B + np.eye(n)


def test_as_csr_is_canonical():
    A = sp.coo_matrix(([1.0, 2.0, 3.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2))
    C = as_csr(A)
    assert C.nnz == 2
    assert C[0, 1] == 3.0
    assert C.has_sorted_indices


def test_as_csr_rejects_non_finite():
    with pytest.raises(SolverError):
        as_csr(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_spmv_small_example():
    A = as_csr([[2.0, 0.0], [1.0, 3.0]])
    assert np.array_equal(spmv(A, [1.0, 1.0]), [2.0, 4.0])


def test_spmv_shape_mismatch():
    with pytest.raises(DimensionError):
        spmv(as_csr(np.eye(3)), np.ones(2))


def test_transpose_is_adjoint(rng):
    A = as_csr(sp.random(10, 7, density=0.5, random_state=42))
    x, y = rng.standard_normal(7), rng.standard_normal(10)
    lhs = spmv(A, x) @ y
    rhs = x @ spmv(transpose(A), y)
    assert abs(lhs - rhs) <= 1e-13 * max(1.0, abs(lhs))


def test_solve_spd_two_by_two():
    x = solve_spd([[4.0, 1.0], [1.0, 3.0]], [1.0, 2.0])
    assert np.allclose(x, [1.0 / 11.0, 7.0 / 11.0], rtol=0, atol=1e-15)


def test_cg_and_cholesky_agree(rng):
    A = _random_spd(rng, 50)
    b = rng.standard_normal(50)
    direct = solve_spd(A, b)
    result = conjugate_gradient(as_csr(A), b, tol=1e-12)
    assert result.converged
    assert np.linalg.norm(A @ result.x - b) <= 1e-12 * np.linalg.norm(b) * 10
    assert np.linalg.norm(result.x - direct) <= 1e-8 * np.linalg.norm(direct)
    assert np.allclose(solve_spd(A, b, method="cg"), direct, rtol=1e-8)


def test_cg_strict_raises_when_capped(rng):
    A = as_csr(_random_spd(rng, 30))
    b = rng.standard_normal(30)
    with pytest.raises(ConvergenceError) as info:
        conjugate_gradient(A, b, tol=1e-14, max_iter=1)
    assert info.value.iterations == 1


def test_cg_lenient_returns_partial_result(rng):
    A = as_csr(_random_spd(rng, 30))
    result = conjugate_gradient(A, rng.standard_normal(30), tol=1e-14, max_iter=2, strict=False)
    assert not result.converged
    assert result.iterations == 2


def test_cg_zero_rhs():
    result = conjugate_gradient(as_csr(np.eye(4)), np.zeros(4))
    assert result.converged and result.iterations == 0
    assert not result.x.any()


def test_cg_rejects_non_positive_diagonal():
    with pytest.raises(NotSPDError):
        conjugate_gradient(as_csr([[1.0, 0.0], [0.0, -1.0]]), np.ones(2))


def test_factor_rejects_asymmetric_and_indefinite():
    with pytest.raises(NotSPDError):
        SpdFactor([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(NotSPDError):
        SpdFactor([[1.0, 2.0], [2.0, 1.0]])


def test_solve_spd_unknown_method():
    with pytest.raises(ValueError):
        solve_spd(np.eye(2), np.ones(2), method="gauss")


def test_symmetry_defect():
    assert symmetry_defect(np.eye(3)) == 0.0
    assert symmetry_defect(np.array([[1.0, 1.0], [0.0, 1.0]])) == pytest.approx(1.0)


def test_weighted_norms_diagonal():
    W = as_csr(np.diag([2.0, 8.0]))
    v = np.ones(2)
    assert weighted_norm_sq(W, v) == pytest.approx(10.0)
    assert weighted_inv_norm_sq(W, v) == pytest.approx(0.625)


def test_weighted_norms_are_dual(rng):
    W = as_csr(_random_spd(rng, 12))
    v = rng.standard_normal(12)
    direct = weighted_norm_sq(W, v)
    via_inverse = weighted_inv_norm_sq(W, spmv(W, v), factor=SpdFactor(W))
    assert via_inverse == pytest.approx(direct, rel=1e-10)
    # Cauchy–Schwarz in the W / W⁻¹ pairing
    assert weighted_norm_sq(W, v) * weighted_inv_norm_sq(W, v) >= (v @ v) ** 2 * (1 - 1e-12)
