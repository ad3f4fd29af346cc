"""
problems/base.py — Problem data shared by the reaction–diffusion and eddy-current solvers.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from fem_spaces import AnalyticField, Field, PiecewiseConstant
from mesh2d import BoundaryKind, Mesh


class ProblemError(Exception):
    """Unknown case, malformed problem data or an unsupported boundary setup."""


@dataclass
class RdProblem:
    """
    -div(α∇u) + ρu = f with p = α∇u.

    Γ_D carries u = g (g = dirichlet_data, zero when omitted), Γ_N carries
    n·p = 0 and Γ_R the coupling n·p + γu = 0.
    """
    alpha: PiecewiseConstant
    rho: PiecewiseConstant
    f: Field
    dirichlet_data: Optional[Field] = None
    gamma: float = 1.0
    name: str = "rd"
    mesh_factory: Optional[Callable[[], Mesh]] = field(default=None, repr=False)

    def __post_init__(self):
        self.alpha = self.alpha.as_tensor()
        if self.rho.tensor:
            raise ProblemError("Reaction coefficient ρ must be scalar")
        if not np.isfinite(self.gamma) or self.gamma <= 0.0:
            raise ProblemError(f"Robin coefficient γ must be positive, got {self.gamma}")

    def initial_mesh(self) -> Mesh:
        if self.mesh_factory is None:
            raise ProblemError(f"Problem '{self.name}' has no initial mesh")
        return self.mesh_factory()


@dataclass
class Ec2dProblem:
    """
    ∇⊥H + εE = J, μH = rot E.

    Γ_D carries tangential E = 0, Γ_N carries H = 0.
    """
    eps: PiecewiseConstant
    mu: PiecewiseConstant
    J: Field
    name: str = "ec"
    mesh_factory: Optional[Callable[[], Mesh]] = field(default=None, repr=False)

    def __post_init__(self):
        self.eps = self.eps.as_tensor()
        if self.mu.tensor:
            raise ProblemError("Permeability μ must be scalar")

    def initial_mesh(self) -> Mesh:
        if self.mesh_factory is None:
            raise ProblemError(f"Problem '{self.name}' has no initial mesh")
        return self.mesh_factory()


Problem = Union[RdProblem, Ec2dProblem]


@dataclass
class ManufacturedCase:
    """
    A problem with known solution.

    primal: u with ∇u, or E with rot E.
    dual:   p with div p, or H with ∇H.
    approximation: optional analytic (primal, dual) pair used where the
    approximation is constructed rather than computed.
    """
    name: str
    problem: Problem
    primal: AnalyticField
    dual: AnalyticField
    approximation: Optional[tuple[AnalyticField, AnalyticField]] = None
    notes: str = ""

    @property
    def kind(self) -> str:
        return "rd" if isinstance(self.problem, RdProblem) else "ec"

    def initial_mesh(self) -> Mesh:
        return self.problem.initial_mesh()


def check_supported_boundary(mesh: Mesh, name: str):
    """Solvers handle Dirichlet and Neumann parts only."""
    if np.any(mesh.boundary_kind == BoundaryKind.ROBIN):
        raise ProblemError(f"Problem '{name}': Robin boundary parts are not supported by the FEM solvers")
