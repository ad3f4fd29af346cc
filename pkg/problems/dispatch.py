"""
problems/dispatch.py — Pick the solver that matches a problem type.
"""

from fem_spaces import DEFAULT_ASSEMBLY_DEGREE, FeFunction
from mesh2d import Mesh
from problems.base import Ec2dProblem, Problem, ProblemError, RdProblem
from problems.eddy_current import solve_ec2d
from problems.reaction_diffusion import solve_rd


def solve_pair(
    problem: Problem,
    mesh: Mesh,
    tol: float = 1e-12,
    method: str = "direct",
    degree: int = DEFAULT_ASSEMBLY_DEGREE,
) -> tuple[FeFunction, FeFunction]:
    """(primal, dual) Galerkin pair for either problem type."""
    if isinstance(problem, RdProblem):
        return solve_rd(problem, mesh, tol=tol, method=method, degree=degree)
    if isinstance(problem, Ec2dProblem):
        return solve_ec2d(problem, mesh, tol=tol, method=method, degree=degree)
    raise ProblemError(f"No solver for {type(problem).__name__}")
