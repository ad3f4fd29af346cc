import numpy as np
import pytest
import scipy.sparse as sp

from abstract_identity import (
    MixedSolution,
    OperatorSystem,
    backward_euler_step,
    combined_error_sq,
    continuity_profile,
    dual_error_sq,
    equality_residual,
    isometry_deficit,
    majorant,
    primal_error_sq,
    random_spd,
    random_system,
    sharpness_check,
    solve_dual,
    solve_primal,
)
from sparse_linalg import DimensionError, NotSPDError, spmv


def _rhs(system, seed=7):
    return np.random.default_rng(seed).standard_normal(system.n)


def test_random_system_is_reproducible():
    a, b = random_system(9, 5, seed=3), random_system(9, 5, seed=3)
    assert (a.A != b.A).nnz == 0
    assert np.array_equal(a.W1.toarray(), b.W1.toarray())
    c = random_system(9, 5, seed=4)
    assert not np.array_equal(a.W1.toarray(), c.W1.toarray())


def test_operator_system_checks_shapes():
    with pytest.raises(DimensionError):
        OperatorSystem(A=sp.eye(3, 2), W1=sp.eye(3), W2=sp.eye(3))


def test_operator_system_rejects_indefinite_weight():
    with pytest.raises(NotSPDError):
        OperatorSystem(A=sp.eye(2), W1=sp.diags([1.0, -1.0]), W2=sp.eye(2))


def test_solve_primal_residual():
    system = random_system(12, 8, seed=11)
    f = _rhs(system)
    sol = solve_primal(system, f)
    residual = spmv(system.AT, spmv(system.W2, spmv(system.A, sol.x))) + spmv(system.W1, sol.x) - f
    assert np.linalg.norm(residual) <= 1e-12 * np.linalg.norm(f) * 10
    assert np.allclose(sol.y, spmv(system.W2, spmv(system.A, sol.x)))


def test_dual_paths_agree():
    system = random_system(10, 6, seed=5)
    f = _rhs(system)
    direct = solve_dual(system, f)
    via_primal = solve_dual(system, f, via_primal=True)
    assert np.linalg.norm(direct - via_primal) <= 1e-9 * np.linalg.norm(via_primal)


def test_scalar_system_by_hand():
    # W1 = 1, W2 = 2, A = 1: (2 + 1)x = 3 → x = 1, y = 2
    system = OperatorSystem(A=sp.csr_matrix([[1.0]]), W1=sp.csr_matrix([[1.0]]), W2=sp.csr_matrix([[2.0]]))
    sol = solve_primal(system, [3.0])
    assert sol.x == pytest.approx([1.0])
    assert sol.y == pytest.approx([2.0])
    assert isometry_deficit(system, [3.0]) <= 1e-14


def test_majorant_vanishes_at_exact_solution():
    system = random_system(8, 6, seed=2)
    f = _rhs(system)
    sol = solve_primal(system, f)
    total, eq, flux = majorant(system, f, sol.x, sol.y)
    assert total == pytest.approx(eq + flux)
    assert total <= 1e-20 * system.norm1_inv_sq(f)


def _battery(count: int, seed: int):
    """Seeded random systems of sizes n, m ∈ 1..100 with a random rhs and approximation pair."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n, m = (int(v) for v in rng.integers(1, 101, size=2))
        system = random_system(n, m, seed=int(rng.integers(2**31 - 1)))
        f = rng.standard_normal(n)
        approx = MixedSolution(x=rng.standard_normal(n), y=rng.standard_normal(m))
        yield system, f, approx


def test_majorant_equals_combined_error_for_any_pair():
    worst = 0.0
    for system, f, approx in _battery(100, seed=0):
        exact = solve_primal(system, f)
        total, _, _ = majorant(system, f, approx.x, approx.y)
        assert total == pytest.approx(combined_error_sq(system, exact, approx), rel=1e-10)
        residual = equality_residual(system, f, approx)
        assert not residual.degenerate
        worst = max(worst, residual.delta_rel)
    assert worst <= 1e-10


def test_equality_residual_zero_data():
    system = random_system(4, 3, seed=9)
    approx = MixedSolution(x=np.ones(4), y=np.ones(3))
    residual = equality_residual(system, np.zeros(4), approx)
    assert residual.degenerate
    assert residual.delta == 0.0 and residual.delta_rel == 0.0


def test_isometry_random_systems():
    for system, f, _ in _battery(100, seed=1):
        assert isometry_deficit(system, f) <= 1e-10 * np.sqrt(system.norm1_inv_sq(f))


def test_rhs_shape_checked():
    system = random_system(4, 3, seed=1)
    with pytest.raises(DimensionError):
        solve_primal(system, np.ones(3))


def test_sharpness_minimum_is_primal_error():
    system = random_system(10, 8, seed=6)
    rng = np.random.default_rng(60)
    f = rng.standard_normal(system.n)
    x_approx = rng.standard_normal(system.n)
    y_approx = rng.standard_normal(system.m)
    report = sharpness_check(system, f, x_approx, trials=100, seed=1, y_approx=y_approx)
    assert report.violations == 0
    assert report.primal_gap <= 1e-10
    assert report.equality_hits >= 1
    assert report.dual_minimum == pytest.approx(report.dual_error_sq, rel=1e-10)


def test_sharpness_battery():
    for k, (system, f, approx) in enumerate(_battery(20, seed=2)):
        report = sharpness_check(system, f, approx.x, trials=100, seed=k, y_approx=approx.y)
        assert report.violations == 0
        assert report.primal_gap <= 1e-10


def test_sharpness_needs_a_trial():
    system = random_system(3, 2, seed=0)
    with pytest.raises(ValueError):
        sharpness_check(system, np.ones(3), np.zeros(3), trials=0, seed=0)


def test_continuity_profile_shrinks():
    system = random_system(6, 4, seed=12)
    f = _rhs(system)
    y_approx = np.random.default_rng(5).standard_normal(system.m)
    profile = continuity_profile(system, f, y_approx, scales=[1.0, 1e-1, 1e-2, 1e-3])
    assert all(b <= a for a, b in zip(profile, profile[1:]))
    assert profile[-1] <= 1e-5 * profile[0]


def test_error_parts_are_nonnegative():
    system = random_system(5, 4, seed=21)
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(5), rng.standard_normal(4)
    assert primal_error_sq(system, x, np.zeros(5)) > 0.0
    assert dual_error_sq(system, y, np.zeros(4)) > 0.0


def test_backward_euler_steps_keep_the_equality():
    rng = np.random.default_rng(31)
    n, m = 10, 8
    A = sp.random(m, n, density=0.4, random_state=31)
    L1, L2 = random_spd(n, rng), random_spd(m, rng)
    x, y = rng.standard_normal(n), rng.standard_normal(m)
    for _ in range(50):
        step = backward_euler_step(A, L1, L2, 0.1, x, y, g=rng.standard_normal(n), h=rng.standard_normal(m))
        assert step.delta_rel <= 1e-10
        x, y = step.x, step.y_next
    assert np.all(np.isfinite(x)) and np.all(np.isfinite(y))


def test_backward_euler_rejects_bad_step():
    with pytest.raises(ValueError):
        backward_euler_step(sp.eye(2), sp.eye(2), sp.eye(2), 0.0, np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2))


def test_backward_euler_explicit_inverse_limit():
    rng = np.random.default_rng(3)
    for n, m in [(64, 4), (65, 4)]:
        A = sp.random(m, n, density=0.4, random_state=3)
        args = (A, random_spd(n, rng), random_spd(m, rng), 0.1, np.zeros(n), np.zeros(m), np.ones(n), np.ones(m))
        if n <= 64:
            assert backward_euler_step(*args).delta_rel <= 1e-10
        else:
            with pytest.raises(DimensionError):
                backward_euler_step(*args)
