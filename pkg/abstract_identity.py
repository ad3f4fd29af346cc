"""
abstract_identity.py — The error equality for A*α₂Ax + α₁x = f in coordinates.

Spaces are ℝⁿ (primal) and ℝᵐ (dual) with Euclidean inner products, so the
adjoint of A is Aᵀ. α₁ and α₂ are the SPD matrices W1 and W2.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from sparse_linalg import (
    DimensionError,
    NotSPDError,
    SpdFactor,
    as_csr,
    conjugate_gradient,
    spmv,
    transpose,
    weighted_inv_norm_sq,
    weighted_norm_sq,
)

logger = logging.getLogger(__name__)

ZERO_FLOOR = 1e-300
# largest Λ₁ block inverted explicitly in backward_euler_step
EXPLICIT_INVERSE_LIMIT = 64


@dataclass(frozen=True, eq=False)
class OperatorSystem:
    """Discrete triple (A, W1, W2) with A: ℝⁿ → ℝᵐ."""
    A: sp.csr_matrix
    W1: sp.csr_matrix
    W2: sp.csr_matrix

    def __post_init__(self):
        object.__setattr__(self, "A", as_csr(self.A))
        object.__setattr__(self, "W1", as_csr(self.W1))
        object.__setattr__(self, "W2", as_csr(self.W2))
        m, n = self.A.shape
        if self.W1.shape != (n, n) or self.W2.shape != (m, m):
            raise DimensionError(
                f"A is {self.A.shape}, W1 is {self.W1.shape}, W2 is {self.W2.shape}"
            )
        # Factor eagerly so non-SPD weights fail at construction.
        _ = self.W1_factor, self.W2_factor

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @cached_property
    def AT(self) -> sp.csr_matrix:
        return transpose(self.A)

    @cached_property
    def W1_factor(self) -> SpdFactor:
        return SpdFactor(self.W1)

    @cached_property
    def W2_factor(self) -> SpdFactor:
        return SpdFactor(self.W2)

    @cached_property
    def primal_factor(self) -> SpdFactor:
        return SpdFactor(as_csr(self.AT @ self.W2 @ self.A + self.W1))

    def norm1_sq(self, v) -> float:
        return weighted_norm_sq(self.W1, v)

    def norm1_inv_sq(self, v) -> float:
        return weighted_inv_norm_sq(self.W1, v, factor=self.W1_factor)

    def norm2_sq(self, v) -> float:
        return weighted_norm_sq(self.W2, v)

    def norm2_inv_sq(self, v) -> float:
        return weighted_inv_norm_sq(self.W2, v, factor=self.W2_factor)


@dataclass
class MixedSolution:
    """Primal x ∈ ℝⁿ and dual y ∈ ℝᵐ."""
    x: np.ndarray
    y: np.ndarray


def _check_rhs(sys: OperatorSystem, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (sys.n,):
        raise DimensionError(f"Right hand side has shape {f.shape}, expected ({sys.n},)")
    return f


# ─── Solves ─────────────────────────────────────────────────────────────

def solve_primal(sys: OperatorSystem, f, tol: float = 1e-12) -> MixedSolution:
    """Solve (AᵀW2A + W1)x = f and set y = W2Ax."""
    f = _check_rhs(sys, f)
    x = sys.primal_factor.solve(f)
    y = spmv(sys.W2, spmv(sys.A, x))
    return MixedSolution(x=x, y=y)


def solve_dual(sys: OperatorSystem, f, tol: float = 1e-12, via_primal: bool = False) -> np.ndarray:
    """
    Solve (A W1⁻¹ Aᵀ + W2⁻¹) y = A W1⁻¹ f.

    The direct path runs CG on the dual operator applied through the W1 and W2
    factorizations; via_primal recovers y = W2Ax from the primal solution instead.
    """
    f = _check_rhs(sys, f)
    if via_primal:
        return solve_primal(sys, f, tol).y
    if sys.m == 0:
        return np.zeros(0)

    def apply(v: np.ndarray) -> np.ndarray:
        v = np.ravel(v)
        return spmv(sys.A, sys.W1_factor.solve(spmv(sys.AT, v))) + sys.W2_factor.solve(v)

    S = spla.LinearOperator((sys.m, sys.m), matvec=apply, dtype=float)
    rhs = spmv(sys.A, sys.W1_factor.solve(f))
    return conjugate_gradient(S, rhs, tol=tol, preconditioner="none").x


# ─── Majorant and norms ─────────────────────────────────────────────────

def majorant(sys: OperatorSystem, f, x_approx, y_approx) -> tuple[float, float, float]:
    """
    Functional majorant M(x̃, ỹ) and its two parts.

    Returns:
        (M_total, M_eq, M_flux) with M_eq = ‖f - W1x̃ - Aᵀỹ‖²_{W1⁻¹} and
        M_flux = ‖ỹ - W2Ax̃‖²_{W2⁻¹}
    """
    f = _check_rhs(sys, f)
    x_approx = np.asarray(x_approx, dtype=float)
    y_approx = np.asarray(y_approx, dtype=float)
    r_eq = f - spmv(sys.W1, x_approx) - spmv(sys.AT, y_approx)
    r_flux = y_approx - spmv(sys.W2, spmv(sys.A, x_approx))
    m_eq = sys.norm1_inv_sq(r_eq)
    m_flux = sys.norm2_inv_sq(r_flux)
    return m_eq + m_flux, m_eq, m_flux


def primal_error_sq(sys: OperatorSystem, x, x_approx) -> float:
    e = np.asarray(x, dtype=float) - np.asarray(x_approx, dtype=float)
    return sys.norm1_sq(e) + sys.norm2_sq(spmv(sys.A, e))


def dual_error_sq(sys: OperatorSystem, y, y_approx) -> float:
    d = np.asarray(y, dtype=float) - np.asarray(y_approx, dtype=float)
    return sys.norm2_inv_sq(d) + sys.norm1_inv_sq(spmv(sys.AT, d))


def combined_error_sq(sys: OperatorSystem, exact: MixedSolution, approx: MixedSolution) -> float:
    """|||(x, y) - (x̃, ỹ)|||² in the combined norm."""
    return primal_error_sq(sys, exact.x, approx.x) + dual_error_sq(sys, exact.y, approx.y)


@dataclass
class EqualityResidual:
    delta: float
    delta_rel: float
    error: float              # sqrt of the combined error
    majorant: float           # sqrt of M
    f_norm: float             # ‖f‖_{W1⁻¹}
    degenerate: bool = False  # f = 0, δ defined as 0


def equality_residual(sys: OperatorSystem, f, approx: MixedSolution) -> EqualityResidual:
    """δ = |sqrt(combined error²) - sqrt(M)| against the internally solved exact pair."""
    f = _check_rhs(sys, f)
    f_norm = np.sqrt(sys.norm1_inv_sq(f))
    exact = solve_primal(sys, f)
    error = np.sqrt(combined_error_sq(sys, exact, approx))
    m_total, _, _ = majorant(sys, f, approx.x, approx.y)
    bound = np.sqrt(m_total)
    if f_norm <= ZERO_FLOOR:
        return EqualityResidual(0.0, 0.0, error, bound, 0.0, degenerate=True)
    delta = abs(error - bound)
    return EqualityResidual(delta, delta / f_norm, error, bound, f_norm)


def isometry_deficit(sys: OperatorSystem, f) -> float:
    """| |||(x, y)||| - ‖f‖_{W1⁻¹} | for the exact mixed solution."""
    f = _check_rhs(sys, f)
    exact = solve_primal(sys, f)
    zero = MixedSolution(x=np.zeros(sys.n), y=np.zeros(sys.m))
    norm = np.sqrt(combined_error_sq(sys, exact, zero))
    return abs(norm - np.sqrt(sys.norm1_inv_sq(f)))


# ─── Sharpness ──────────────────────────────────────────────────────────

@dataclass
class SharpnessReport:
    """Minimum characterisation of the primal and dual errors."""
    primal_error_sq: float
    primal_minimum: float                 # M(x̃, y)
    primal_violations: int
    dual_error_sq: float | None = None
    dual_minimum: float | None = None     # M(x, ỹ)
    dual_violations: int = 0
    equality_hits: int = 0                # probes that reproduced the minimum
    trials: int = 0

    @property
    def primal_gap(self) -> float:
        return abs(self.primal_minimum - self.primal_error_sq) / max(self.primal_error_sq, 1e-300)

    @property
    def violations(self) -> int:
        return self.primal_violations + self.dual_violations


def sharpness_check(
    sys: OperatorSystem,
    f,
    x_approx,
    trials: int,
    seed: int,
    y_approx=None,
    slack: float = 1e-12,
) -> SharpnessReport:
    """
    Check that M(x̃, ·) is minimised by the exact dual and that the minimum is
    the primal error (and symmetrically for a fixed ỹ).

    The first probe on each side is the exact solution itself.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    f = _check_rhs(sys, f)
    x_approx = np.asarray(x_approx, dtype=float)
    exact = solve_primal(sys, f)

    err_sq = primal_error_sq(sys, exact.x, x_approx)
    minimum = majorant(sys, f, x_approx, exact.y)[0]
    floor = minimum - slack * max(1.0, minimum)
    report = SharpnessReport(primal_error_sq=err_sq, primal_minimum=minimum, primal_violations=0, trials=trials)

    probes = [exact.y] + [exact.y + rng.standard_normal(sys.m) * rng.uniform(1e-3, 1.0) for _ in range(trials - 1)]
    for psi in probes:
        value = majorant(sys, f, x_approx, psi)[0]
        if value < floor:
            report.primal_violations += 1
        if abs(value - minimum) <= slack * max(1.0, minimum):
            report.equality_hits += 1

    if y_approx is not None:
        y_approx = np.asarray(y_approx, dtype=float)
        report.dual_error_sq = dual_error_sq(sys, exact.y, y_approx)
        report.dual_minimum = majorant(sys, f, exact.x, y_approx)[0]
        dual_floor = report.dual_minimum - slack * max(1.0, report.dual_minimum)
        for _ in range(trials):
            phi = exact.x + rng.standard_normal(sys.n) * rng.uniform(1e-3, 1.0)
            if majorant(sys, f, phi, y_approx)[0] < dual_floor:
                report.dual_violations += 1

    logger.debug(
        f"Sharpness n={sys.n} m={sys.m}: gap {report.primal_gap:.2e}, "
        f"violations {report.violations}, hits {report.equality_hits}"
    )
    return report


def continuity_profile(sys: OperatorSystem, f, y_approx, scales, seed: int = 0) -> list[float]:
    """
    |M(x + s·v, ỹ) - dual error²| for a fixed random direction v and each scale s.

    The values tend to zero with s, showing M(x̃, ỹ) approaches the dual error.
    """
    rng = np.random.default_rng(seed)
    f = _check_rhs(sys, f)
    exact = solve_primal(sys, f)
    target = dual_error_sq(sys, exact.y, y_approx)
    direction = rng.standard_normal(sys.n)
    return [abs(majorant(sys, f, exact.x + s * direction, y_approx)[0] - target) for s in scales]


# ─── Random systems ─────────────────────────────────────────────────────

def random_spd(size: int, rng: np.random.Generator) -> sp.csr_matrix:
    """BᵀB + size·I for a random B."""
    B = rng.uniform(-1.0, 1.0, size=(size, size))
    W = B.T @ B + size * np.eye(size)
    return as_csr(0.5 * (W + W.T))


def random_system(n: int, m: int, seed: int, density: float = 0.3) -> OperatorSystem:
    """Seeded OperatorSystem with A (m×n) uniform in [-1, 1] at the given density."""
    rng = np.random.default_rng(seed)
    A = sp.random(m, n, density=density, random_state=rng, data_rvs=lambda k: rng.uniform(-1.0, 1.0, k))
    return OperatorSystem(A=as_csr(A), W1=random_spd(n, rng), W2=random_spd(m, rng))


# ─── Backward Euler ─────────────────────────────────────────────────────

@dataclass
class EulerStep:
    x: np.ndarray             # x_n
    y: np.ndarray             # mixed dual Λ₂Ax_n of the step problem
    y_next: np.ndarray        # time-stepping state y_n
    delta: float
    delta_rel: float
    system: OperatorSystem = field(repr=False)


def backward_euler_step(A, Lambda1, Lambda2, dt: float, x_prev, y_prev, g, h) -> EulerStep:
    """
    One implicit Euler step for δ⁻¹Λ₁⁻¹(x_n - x_{n-1}) - Aᵀy_n = g_n,
    δ⁻¹(y_n - y_{n-1}) + Λ₂Ax_n = Λ₂h_n.

    x_n solves the abstract problem with W1 = δ⁻²Λ₁⁻¹, W2 = Λ₂ and
    f_n = Aᵀ(Λ₂h + δ⁻¹y_{n-1}) + δ⁻²Λ₁⁻¹x_{n-1} + δ⁻¹g.
    """
    if dt <= 0.0:
        raise ValueError(f"Time step must be positive, got {dt}")
    A = as_csr(A)
    Lambda2 = as_csr(Lambda2)
    L1 = as_csr(Lambda1)
    n = A.shape[1]
    if n > EXPLICIT_INVERSE_LIMIT:
        raise DimensionError(f"Explicit Λ₁⁻¹ is limited to {EXPLICIT_INVERSE_LIMIT} unknowns, got {n}")
    try:
        L1_inv = SpdFactor(L1).solve(np.eye(n))
    except NotSPDError as e:
        raise NotSPDError(f"Λ₁ rejected: {e}") from e
    L1_inv = 0.5 * (L1_inv + L1_inv.T)

    system = OperatorSystem(A=A, W1=as_csr(L1_inv / dt**2), W2=Lambda2)
    x_prev = np.asarray(x_prev, dtype=float)
    f = (
        spmv(system.AT, spmv(Lambda2, np.asarray(h, dtype=float)) + np.asarray(y_prev, dtype=float) / dt)
        + spmv(system.W1, x_prev)
        + np.asarray(g, dtype=float) / dt
    )
    solution = solve_primal(system, f)
    y_next = np.asarray(y_prev, dtype=float) + dt * spmv(Lambda2, np.asarray(h, dtype=float) - spmv(A, solution.x))

    predictor = MixedSolution(x=x_prev, y=spmv(Lambda2, spmv(A, x_prev)))
    residual = equality_residual(system, f, predictor)
    return EulerStep(
        x=solution.x,
        y=solution.y,
        y_next=y_next,
        delta=residual.delta,
        delta_rel=residual.delta_rel,
        system=system,
    )
