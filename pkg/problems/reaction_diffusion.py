"""
problems/reaction_diffusion.py — Primal (P1) and dual (RT0) solves of the reaction–diffusion problem.

Primal: ∫∇u·α∇v + ∫ρuv = ∫fv, u = g on Γ_D.
Dual:   ∫ρ⁻¹ div p div ψ + ∫p·α⁻¹ψ = -∫ρ⁻¹f div ψ + ∫_{Γ_D} g n·ψ, n·p = 0 on Γ_N.
"""

import logging

import numpy as np

from fem_spaces import (
    DEFAULT_ASSEMBLY_DEGREE,
    ConstrainedSystem,
    FeFunction,
    FeSpace,
    PiecewiseConstant,
    SpaceKind,
    apply_essential,
    assemble,
    assemble_load,
    boundary_flux_load,
    essential_trace,
)
from mesh2d import BoundaryKind, Mesh
from problems.base import RdProblem, check_supported_boundary
from sparse_linalg import conjugate_gradient, solve_spd

logger = logging.getLogger(__name__)

CRUDE_TOL = 1e-4


# ─── Linear systems ─────────────────────────────────────────────────────

def primal_system(problem: RdProblem, mesh: Mesh, degree: int = DEFAULT_ASSEMBLY_DEGREE) -> tuple[FeSpace, ConstrainedSystem]:
    check_supported_boundary(mesh, problem.name)
    space = FeSpace(SpaceKind.P1, mesh, essential=(BoundaryKind.DIRICHLET,))
    matrix = assemble(space, "stiffness", problem.alpha, degree) + assemble(space, "mass", problem.rho, degree)
    rhs = assemble_load(space, problem.f, "value", degree=degree)
    trace = essential_trace(space, problem.dirichlet_data) if problem.dirichlet_data is not None else None
    return space, apply_essential(space, matrix, rhs, trace)


def dual_system(problem: RdProblem, mesh: Mesh, degree: int = DEFAULT_ASSEMBLY_DEGREE) -> tuple[FeSpace, ConstrainedSystem]:
    check_supported_boundary(mesh, problem.name)
    space = FeSpace(SpaceKind.RT0, mesh, essential=(BoundaryKind.NEUMANN,))
    rho_inv = problem.rho.inverse()
    matrix = assemble(space, "divdiv", rho_inv, degree) + assemble(space, "mass", problem.alpha.inverse(), degree)
    rhs = assemble_load(space, problem.f, "div", weight=rho_inv, degree=degree)
    if problem.dirichlet_data is not None:
        rhs = rhs + boundary_flux_load(space, problem.dirichlet_data, kinds=(BoundaryKind.DIRICHLET,))
    return space, apply_essential(space, matrix, rhs)


def _direct(space: FeSpace, system: ConstrainedSystem, tol: float, method: str) -> FeFunction:
    if len(system.free) == 0:
        return FeFunction(space, system.expand(np.zeros(0)))
    x = solve_spd(system.matrix, system.rhs, tol=tol, method=method)
    return FeFunction(space, system.expand(x))


def _crude(space: FeSpace, system: ConstrainedSystem, tol: float) -> FeFunction:
    n = len(system.free)
    if n == 0:
        return FeFunction(space, system.expand(np.zeros(0)))
    result = conjugate_gradient(system.matrix, system.rhs, tol=tol, max_iter=10 * n, preconditioner="none", strict=False)
    logger.info(f"Undersolved {space.kind.value} system: {result.iterations} CG steps, residual {result.residual:.2e}")
    return FeFunction(space, system.expand(result.x))


# ─── Solvers ────────────────────────────────────────────────────────────

def solve_rd(
    problem: RdProblem,
    mesh: Mesh,
    tol: float = 1e-12,
    method: str = "direct",
    degree: int = DEFAULT_ASSEMBLY_DEGREE,
) -> tuple[FeFunction, FeFunction]:
    """
    Galerkin approximations of the potential and the flux.

    Args:
        problem: reaction–diffusion data
        mesh: triangulation with matching region labels and Dirichlet/Neumann tags
        tol: residual target for the CG path
        method: "direct" or "cg"

    Returns:
        (û in P1, p̂ in RT0)
    """
    u_space, u_system = primal_system(problem, mesh, degree)
    p_space, p_system = dual_system(problem, mesh, degree)
    u_h = _direct(u_space, u_system, tol, method)
    p_h = _direct(p_space, p_system, tol, method)
    logger.debug(f"solve_rd '{problem.name}': {u_space.dof_count} P1 + {p_space.dof_count} RT0 dofs")
    return u_h, p_h


def iterative_undersolve(
    problem: RdProblem,
    mesh: Mesh,
    crude_tol: float = CRUDE_TOL,
    degree: int = DEFAULT_ASSEMBLY_DEGREE,
) -> tuple[FeFunction, FeFunction]:
    """
    Unpreconditioned CG stopped at relative residual `crude_tol` (at most 10·n
    steps). The result is conforming but generally not the Galerkin solution.
    """
    u_space, u_system = primal_system(problem, mesh, degree)
    p_space, p_system = dual_system(problem, mesh, degree)
    return _crude(u_space, u_system, crude_tol), _crude(p_space, p_system, crude_tol)


def gradient_average(u_h: FeFunction, alpha: PiecewiseConstant) -> FeFunction:
    """
    Flux recovered by averaging α∇û over the triangles around each vertex
    (arithmetic mean). The result is continuous, hence H(div)-conforming.
    """
    if u_h.space.kind is not SpaceKind.P1:
        raise ValueError("Gradient averaging needs a P1 potential")
    mesh = u_h.mesh
    if np.any(mesh.boundary_kind == BoundaryKind.NEUMANN):
        logger.warning("Averaged flux ignores n·p = 0 on Neumann edges; the pair is not conforming there")
    grad = np.einsum("tid,ti->td", mesh.geometry.grad_lambda, u_h.coefficients[mesh.triangles])
    flux = np.einsum("tde,te->td", alpha.as_tensor().per_element(mesh), grad)
    total = np.zeros((mesh.n_vertices, 2))
    np.add.at(total, mesh.triangles.ravel(), np.repeat(flux, 3, axis=0))
    count = np.bincount(mesh.triangles.ravel(), minlength=mesh.n_vertices)
    return FeFunction(FeSpace(SpaceKind.P1_VECTOR, mesh), (total / count[:, None]).ravel())
