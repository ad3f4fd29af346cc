"""
problems/eddy_current.py — 2D eddy-current solves: E in Nédélec N0, H in Courant P1.

E: ∫μ⁻¹ rot E rot Φ + ∫εE·Φ = ∫J·Φ, tangential E = 0 on Γ_D.
H: ∫∇⊥H·ε⁻¹∇⊥ψ + ∫μHψ = ∫ε⁻¹J·∇⊥ψ, H = 0 on Γ_N.
"""

import logging

import numpy as np

from fem_spaces import DEFAULT_ASSEMBLY_DEGREE, FeFunction, FeSpace, SpaceKind, apply_essential, assemble, assemble_load
from mesh2d import BoundaryKind, Mesh
from problems.base import Ec2dProblem, check_supported_boundary
from sparse_linalg import solve_spd

logger = logging.getLogger(__name__)


def solve_ec2d(
    problem: Ec2dProblem,
    mesh: Mesh,
    tol: float = 1e-12,
    method: str = "direct",
    degree: int = DEFAULT_ASSEMBLY_DEGREE,
) -> tuple[FeFunction, FeFunction]:
    """
    Galerkin approximations of the electric field and the magnetic field.

    Returns:
        (Ê in N0, Ĥ in P1)
    """
    check_supported_boundary(mesh, problem.name)

    e_space = FeSpace(SpaceKind.N0, mesh, essential=(BoundaryKind.DIRICHLET,))
    e_matrix = assemble(e_space, "curlcurl", problem.mu.inverse(), degree) + assemble(e_space, "mass", problem.eps, degree)
    e_rhs = assemble_load(e_space, problem.J, "value", degree=degree)
    e_system = apply_essential(e_space, e_matrix, e_rhs)

    eps_inv = problem.eps.inverse()
    h_space = FeSpace(SpaceKind.P1, mesh, essential=(BoundaryKind.NEUMANN,))
    h_matrix = assemble(h_space, "cograd_stiffness", eps_inv, degree) + assemble(h_space, "mass", problem.mu, degree)
    h_rhs = assemble_load(h_space, problem.J, "cograd", weight=eps_inv, degree=degree)
    h_system = apply_essential(h_space, h_matrix, h_rhs)

    solutions = []
    for space, system in ((e_space, e_system), (h_space, h_system)):
        x = solve_spd(system.matrix, system.rhs, tol=tol, method=method) if len(system.free) else np.zeros(0)
        solutions.append(FeFunction(space, system.expand(x)))
    logger.debug(f"solve_ec2d '{problem.name}': {e_space.dof_count} N0 + {h_space.dof_count} P1 dofs")
    return solutions[0], solutions[1]
