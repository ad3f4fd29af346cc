"""
problems/registry.py — Manufactured solutions and the fixed experiment scenarios.

Every field takes points x (..., 2) and matching region labels (...), so
piecewise definitions are evaluated from the side the caller asks for.
"""

import logging
from dataclasses import replace
from typing import Callable, Optional

import numpy as np

from fem_spaces import AnalyticField, PiecewiseConstant, integrate_elements, quadrature_points, sample
from mesh2d import BoundaryKind, Mesh, Side, lshape_structured, rect_structured, side_of
from problems.base import Ec2dProblem, ManufacturedCase, ProblemError, RdProblem
from quadrature import quadrature

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


def _split(x: np.ndarray):
    return x[..., 0], x[..., 1]


def _strips(centroids: np.ndarray) -> np.ndarray:
    """Region 0, 1, 2 for x₁ in (0, ¼), (¼, ¾), (¾, 1)."""
    x1 = centroids[:, 0]
    return np.where(x1 < 0.25, 0, np.where(x1 < 0.75, 1, 2))


def _all(kind: BoundaryKind) -> Callable[[np.ndarray], np.ndarray]:
    return lambda midpoints: np.full(len(midpoints), int(kind), dtype=np.int64)


def _sides(kinds: dict, default: BoundaryKind) -> Callable[[np.ndarray], np.ndarray]:
    def boundary_fn(midpoints):
        side = side_of(midpoints)
        out = np.full(len(midpoints), int(default), dtype=np.int64)
        for s, kind in kinds.items():
            out[side == s] = kind
        return out
    return boundary_fn


STRIP_RHO = {0: 1.0, 1: 10.0, 2: 25.0}


# ─── rd_poly_2d ─────────────────────────────────────────────────────────

def _poly_u(x, region):
    x1, x2 = _split(x)
    return x1 * (1 - x1) * x2 * (1 - x2)


def _poly_grad(x, region):
    x1, x2 = _split(x)
    return np.stack([(1 - 2 * x1) * x2 * (1 - x2), x1 * (1 - x1) * (1 - 2 * x2)], axis=-1)


def _poly_div(x, region):
    x1, x2 = _split(x)
    return -2 * x2 * (1 - x2) - 10 * x1 * (1 - x1)


def rd_poly_2d() -> ManufacturedCase:
    """u = x₁(1−x₁)x₂(1−x₂), α = diag(1, 5), ρ ∈ {1, 10, 25} by strip, u = 0 on ∂Ω."""
    alpha_diag = np.array([1.0, 5.0])
    rho = PiecewiseConstant.scalar(STRIP_RHO)
    problem = RdProblem(
        alpha=PiecewiseConstant.matrix(np.diag(alpha_diag)),
        rho=rho,
        f=lambda x, region: -_poly_div(x, region) + rho.at(region) * _poly_u(x, region),
        name="rd_poly_2d",
        mesh_factory=lambda: rect_structured(20, 5, region_fn=_strips),
    )
    return ManufacturedCase(
        name="rd_poly_2d",
        problem=problem,
        primal=AnalyticField(_poly_u, _poly_grad),
        dual=AnalyticField(lambda x, r: _poly_grad(x, r) * alpha_diag, _poly_div),
        notes="Two-dimensional reaction–diffusion with a polynomial solution and jumping reaction",
    )


# ─── rd_linear_inhomo ───────────────────────────────────────────────────

def rd_linear_inhomo() -> ManufacturedCase:
    """u = 1 + x₁ with u = g on the whole boundary; both Galerkin solutions are exact."""
    rho = PiecewiseConstant.scalar(STRIP_RHO)

    def u(x, region):
        return 1.0 + x[..., 0]

    def grad(x, region):
        return np.stack([np.ones(x.shape[:-1]), np.zeros(x.shape[:-1])], axis=-1)

    problem = RdProblem(
        alpha=PiecewiseConstant.matrix(np.diag([1.0, 5.0])),
        rho=rho,
        f=lambda x, region: rho.at(region) * u(x, region),
        dirichlet_data=u,
        name="rd_linear_inhomo",
        mesh_factory=lambda: rect_structured(8, 8, region_fn=_strips),
    )
    return ManufacturedCase(
        name="rd_linear_inhomo",
        problem=problem,
        primal=AnalyticField(u, grad),
        dual=AnalyticField(grad, lambda x, region: np.zeros(x.shape[:-1])),
        notes="Linear solution with inhomogeneous Dirichlet trace",
    )


# ─── rd_robin ───────────────────────────────────────────────────────────

def rd_robin(gamma: float = 1.0) -> ManufacturedCase:
    """
    α = I, ρ = 1, u = sin(πx₁)x₂(1−x₂) + x₁, Γ_R = {x₁ = 0}, Γ_D elsewhere.

    The approximation is (u − φ, p − ∇φ) with φ = e^{γx₁}(1−x₁²)sin(πx₂):
    n·∇φ + γφ = 0 on Γ_R and φ = 0 on Γ_D.
    """
    pi = np.pi

    def u(x, region):
        x1, x2 = _split(x)
        return np.sin(pi * x1) * x2 * (1 - x2) + x1

    def grad_u(x, region):
        x1, x2 = _split(x)
        return np.stack([
            pi * np.cos(pi * x1) * x2 * (1 - x2) + 1.0,
            np.sin(pi * x1) * (1 - 2 * x2),
        ], axis=-1)

    def lap_u(x, region):
        x1, x2 = _split(x)
        return -(pi**2) * np.sin(pi * x1) * x2 * (1 - x2) - 2.0 * np.sin(pi * x1)

    def phi(x, region):
        x1, x2 = _split(x)
        return np.exp(gamma * x1) * (1 - x1**2) * np.sin(pi * x2)

    def grad_phi(x, region):
        x1, x2 = _split(x)
        e = np.exp(gamma * x1)
        return np.stack([
            e * (gamma * (1 - x1**2) - 2 * x1) * np.sin(pi * x2),
            e * (1 - x1**2) * pi * np.cos(pi * x2),
        ], axis=-1)

    def lap_phi(x, region):
        x1, x2 = _split(x)
        e = np.exp(gamma * x1)
        return np.sin(pi * x2) * e * (gamma**2 * (1 - x1**2) - 4 * gamma * x1 - 2) - pi**2 * phi(x, region)

    problem = RdProblem(
        alpha=PiecewiseConstant.matrix(np.eye(2)),
        rho=PiecewiseConstant.scalar(1.0),
        f=lambda x, region: -lap_u(x, region) + u(x, region),
        gamma=gamma,
        name="rd_robin",
        mesh_factory=lambda: rect_structured(
            16, 16, boundary_fn=_sides({Side.LEFT: BoundaryKind.ROBIN}, BoundaryKind.DIRICHLET)
        ),
    )
    approximation = (
        AnalyticField(lambda x, r: u(x, r) - phi(x, r), lambda x, r: grad_u(x, r) - grad_phi(x, r)),
        AnalyticField(lambda x, r: grad_u(x, r) - grad_phi(x, r), lambda x, r: lap_u(x, r) - lap_phi(x, r)),
    )
    return ManufacturedCase(
        name="rd_robin",
        problem=problem,
        primal=AnalyticField(u, grad_u),
        dual=AnalyticField(grad_u, lap_u),
        approximation=approximation,
        notes=f"Robin coupling on x₁ = 0 with γ = {gamma}",
    )


# ─── ec_ex4 ─────────────────────────────────────────────────────────────

def _ex4_terms(x):
    """s = (x₁−x₂)²(x₁−1)²x₂, its partials and those of g = ∂₁s."""
    x1, x2 = _split(x)
    a, b, c = x1 - x2, x1 - 1, 2 * x1 - x2 - 1
    s = a * a * b * b * x2
    s1 = 2 * x2 * a * b * c
    s2 = b * b * a * (x1 - 3 * x2)
    g1 = 2 * x2 * (b * c + a * c + 2 * a * b)
    g2 = 2 * a * b * c - 2 * x2 * b * (c + a)
    return s, s1, s2, g1, g2


def _ex4_E(x, region):
    x1, x2 = _split(x)
    s = _ex4_terms(x)[0]
    E = np.stack([
        np.sin(TWO_PI * x1) + TWO_PI * np.cos(TWO_PI * x1) * (x1 - x2),
        np.sin(s) - np.sin(TWO_PI * x1),
    ], axis=-1)
    return np.where((np.asarray(region) == 1)[..., None], E, 0.0)


def _ex4_H(x, region):
    s, s1, _, _, _ = _ex4_terms(x)
    return np.where(np.asarray(region) == 1, np.cos(s) * s1, 0.0)


def _ex4_grad_H(x, region):
    s, s1, s2, g1, g2 = _ex4_terms(x)
    grad = np.stack([
        -np.sin(s) * s1 * s1 + np.cos(s) * g1,
        -np.sin(s) * s2 * s1 + np.cos(s) * g2,
    ], axis=-1)
    return np.where((np.asarray(region) == 1)[..., None], grad, 0.0)


def _ex4_J(x, region):
    grad = _ex4_grad_H(x, region)
    cograd = np.stack([grad[..., 1], -grad[..., 0]], axis=-1)
    return cograd + _ex4_E(x, region)


def _above_diagonal(centroids: np.ndarray) -> np.ndarray:
    return (centroids[:, 0] > centroids[:, 1]).astype(np.int64)


def ec_ex4(n: int = 20) -> ManufacturedCase:
    """
    Eddy current on the unit square with E supported in Ω₁ = {x₁ > x₂},
    ε = I, μ = 1, H = 0 on the whole boundary.
    """
    problem = Ec2dProblem(
        eps=PiecewiseConstant.matrix(np.eye(2)),
        mu=PiecewiseConstant.scalar(1.0),
        J=_ex4_J,
        name="ec_ex4",
        mesh_factory=lambda: rect_structured(n, n, region_fn=_above_diagonal, boundary_fn=_all(BoundaryKind.NEUMANN)),
    )
    return ManufacturedCase(
        name="ec_ex4",
        problem=problem,
        primal=AnalyticField(_ex4_E, _ex4_H),
        dual=AnalyticField(_ex4_H, _ex4_grad_H),
        notes="E tangentially continuous across x₁ = x₂, zero below the diagonal",
    )


# ─── Scenarios ──────────────────────────────────────────────────────────

def scenario_ex6() -> ManufacturedCase:
    """ec_ex4 data on a 200-element start mesh for indicator comparison."""
    case = ec_ex4(10)
    return replace(case, name="ex6", problem=replace(case.problem, name="ex6"))


def scenario_ex7() -> Ec2dProblem:
    """L-shape, ε = I, μ = 1000, J = (1, 0), tangential E = 0 on the whole boundary."""
    return Ec2dProblem(
        eps=PiecewiseConstant.matrix(np.eye(2)),
        mu=PiecewiseConstant.scalar(1000.0),
        J=lambda x, region: np.broadcast_to(np.array([1.0, 0.0]), x.shape).copy(),
        name="ex7",
        mesh_factory=lambda: lshape_structured(8),
    )


def _ex8_regions(centroids: np.ndarray) -> np.ndarray:
    x1, x2 = centroids[:, 0], centroids[:, 1]
    omega1 = ((x2 > 0.4) & (x2 < 0.6)) | ((x1 > 0.3) & (x1 < 0.5))
    omega2 = (x2 > 0.35) & (x2 < 0.65)
    return 2 * omega1.astype(np.int64) + omega2.astype(np.int64)


def _ex8_J(x, region):
    xi = np.log(2.0 + x[..., 1])
    in_band = (np.asarray(region) % 2) == 1
    zeros = np.zeros_like(xi)
    return np.where(in_band[..., None], np.stack([xi, zeros], axis=-1), np.stack([zeros, -xi], axis=-1))


def scenario_ex8() -> Ec2dProblem:
    """
    Cross-shaped Ω₁ with ε = I, μ = 1000 (ε = 100·I, μ = 1 elsewhere); J
    along x₁ in the band Ω₂ and along −x₂ outside it; tangential E = 0 on
    x₁ = 1 only.
    """
    inner, outer = np.eye(2), 100.0 * np.eye(2)
    return Ec2dProblem(
        eps=PiecewiseConstant.matrix({0: outer, 1: outer, 2: inner, 3: inner}),
        mu=PiecewiseConstant.scalar({0: 1.0, 1: 1.0, 2: 1000.0, 3: 1000.0}),
        J=_ex8_J,
        name="ex8",
        mesh_factory=lambda: rect_structured(
            20, 20, region_fn=_ex8_regions,
            boundary_fn=_sides({Side.RIGHT: BoundaryKind.DIRICHLET}, BoundaryKind.NEUMANN),
        ),
    )


CASES: dict[str, Callable[[], ManufacturedCase]] = {
    "rd_poly_2d": rd_poly_2d,
    "ec_ex4": ec_ex4,
    "rd_linear_inhomo": rd_linear_inhomo,
    "rd_robin": rd_robin,
}

SCENARIOS: dict[str, Callable] = {
    "ex6": scenario_ex6,
    "ex7": scenario_ex7,
    "ex8": scenario_ex8,
}


def manufactured_registry(case_id: str) -> ManufacturedCase:
    """Look up a manufactured case by id."""
    try:
        factory = CASES[case_id]
    except KeyError:
        raise ProblemError(f"Unknown case '{case_id}'; known: {', '.join(sorted(CASES))}") from None
    return factory()


def consistency_residual(case: ManufacturedCase, mesh: Optional[Mesh] = None, degree: int = 10) -> float:
    """
    L² size of the residuals of the defining relations, by quadrature:
    f − ρu + div p and p − α∇u, or J − εE − ∇⊥H and μH − rot E.
    """
    mesh = mesh if mesh is not None else case.initial_mesh()
    rule = quadrature(degree)
    x = quadrature_points(mesh, rule)
    region = np.broadcast_to(mesh.region[:, None], x.shape[:2])
    primal, dual = sample(case.primal, mesh, rule), sample(case.dual, mesh, rule)
    problem = case.problem
    if isinstance(problem, RdProblem):
        r_eq = problem.f(x, region) - problem.rho.at(region) * primal.value + dual.derivative
        flux = np.einsum("tde,tqe->tqd", problem.alpha.per_element(mesh), primal.derivative)
        r_const = dual.value - flux
    else:
        eps_E = np.einsum("tde,tqe->tqd", problem.eps.per_element(mesh), primal.value)
        r_eq = np.linalg.norm(problem.J(x, region) - eps_E - dual.cogradient, axis=-1)
        r_const = problem.mu.at(region) * dual.value - primal.derivative
    r_const = r_const if r_const.ndim == 2 else np.linalg.norm(r_const, axis=-1)
    total = integrate_elements(mesh, rule, r_eq**2 + r_const**2).sum()
    return float(np.sqrt(max(total, 0.0)))
