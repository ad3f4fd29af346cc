"""
majorant.py — Functional error majorants, exact combined errors and the discrepancy δ.

For conforming approximations the majorant is not an upper bound but the
exact combined error squared. Both sides are computed with the same
quadrature rule, so δ only measures the quadrature error of the
divergence-theorem term that separates them.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from fem_spaces import (
    Approximation,
    FeFunction,
    SpaceKind,
    integrate_elements,
    quadrature_points,
    sample,
    sample_points,
)
from mesh2d import BoundaryKind, Mesh, uniform_refine
from problems import Ec2dProblem, ManufacturedCase, RdProblem, solve_pair
from problems.base import Problem
from quadrature import edge_quadrature, quadrature

logger = logging.getLogger(__name__)

DEFAULT_ERROR_DEGREE = 10
HYPOTHESIS_TOL = 1e-8


class HypothesisError(Exception):
    """An approximation violates a conformity or coupling hypothesis."""


# ─── Reports ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class MajorantReport:
    """
    Majorant of one approximation pair on one mesh.

    part_eq is the equilibrium term, part_flux the constitutive term and
    eta_sq their per-element sum. The optional fields are filled in by
    equality_report when the exact error is known.
    """
    global_majorant: float
    part_eq: float
    part_flux: float
    eta_sq: np.ndarray
    f_norm_sq: float
    combined_error_sq: Optional[float] = None
    delta: Optional[float] = None
    delta_rel: Optional[float] = None
    normalized: Optional[float] = None

    @property
    def sqrt_majorant(self) -> float:
        return float(np.sqrt(self.global_majorant))

    @property
    def error(self) -> Optional[float]:
        if self.combined_error_sq is None:
            return None
        return float(np.sqrt(self.combined_error_sq))


def _normalized(value_sq: float, f_norm_sq: float) -> Optional[float]:
    if f_norm_sq <= 0.0:
        return None
    return float(np.sqrt(max(value_sq, 0.0) / f_norm_sq))


def _report(mesh: Mesh, rule, eq: np.ndarray, flux: np.ndarray, f_sq: np.ndarray) -> MajorantReport:
    eq_T = integrate_elements(mesh, rule, eq)
    flux_T = integrate_elements(mesh, rule, flux)
    eta_sq = eq_T + flux_T
    total = float(eta_sq.sum())
    f_norm_sq = float(integrate_elements(mesh, rule, f_sq).sum())
    return MajorantReport(
        global_majorant=total,
        part_eq=float(eq_T.sum()),
        part_flux=float(flux_T.sum()),
        eta_sq=eta_sq,
        f_norm_sq=f_norm_sq,
        normalized=_normalized(total, f_norm_sq),
    )


def _require(approx: Approximation, kinds: tuple, slot: str):
    if isinstance(approx, FeFunction) and approx.space.kind not in kinds:
        allowed = " or ".join(k.value for k in kinds)
        raise HypothesisError(f"{slot} approximation must be {allowed}, got {approx.space.kind.value}")


def _points(mesh: Mesh, rule):
    x = quadrature_points(mesh, rule)
    return x, np.broadcast_to(mesh.region[:, None], x.shape[:2])


# ─── Majorants ──────────────────────────────────────────────────────────

def majorant_rd(
    mesh: Mesh,
    problem: RdProblem,
    u_approx: Approximation,
    p_approx: Approximation,
    degree: int = DEFAULT_ERROR_DEGREE,
) -> MajorantReport:
    """
    η_T² = ∫_T ρ⁻¹(f − ρũ + div p̃)² + ∫_T (p̃ − α∇ũ)·α⁻¹(p̃ − α∇ũ).

    Approximations may live on `mesh` or on any ancestor of it.
    """
    _require(u_approx, (SpaceKind.P1,), "Primal")
    _require(p_approx, (SpaceKind.RT0, SpaceKind.P1_VECTOR), "Dual")
    rule = quadrature(degree)
    x, region = _points(mesh, rule)
    u = sample(u_approx, mesh, rule)
    p = sample(p_approx, mesh, rule)
    f = problem.f(x, region)
    rho = problem.rho.at(region)
    r_eq = f - rho * u.value + p.derivative
    r_flux = p.value - np.einsum("tde,tqe->tqd", problem.alpha.per_element(mesh), u.derivative)
    alpha_inv = problem.alpha.inverse().per_element(mesh)
    flux = np.einsum("tqd,tde,tqe->tq", r_flux, alpha_inv, r_flux)
    return _report(mesh, rule, r_eq**2 / rho, flux, f**2 / rho)


def majorant_ec2d(
    mesh: Mesh,
    problem: Ec2dProblem,
    e_approx: Approximation,
    h_approx: Approximation,
    degree: int = DEFAULT_ERROR_DEGREE,
) -> MajorantReport:
    """η_T² = ∫_T (J − εẼ − ∇⊥H̃)·ε⁻¹(J − εẼ − ∇⊥H̃) + ∫_T μ(H̃ − μ⁻¹ rot Ẽ)²."""
    _require(e_approx, (SpaceKind.N0,), "Primal")
    _require(h_approx, (SpaceKind.P1,), "Dual")
    rule = quadrature(degree)
    x, region = _points(mesh, rule)
    E = sample(e_approx, mesh, rule)
    H = sample(h_approx, mesh, rule)
    J = problem.J(x, region)
    eps = problem.eps.per_element(mesh)
    eps_inv = problem.eps.inverse().per_element(mesh)
    mu = problem.mu.at(region)
    r_eq = J - np.einsum("tde,tqe->tqd", eps, E.value) - H.cogradient
    eq = np.einsum("tqd,tde,tqe->tq", r_eq, eps_inv, r_eq)
    flux = (mu * H.value - E.derivative) ** 2 / mu
    return _report(mesh, rule, eq, flux, np.einsum("tqd,tde,tqe->tq", J, eps_inv, J))


def majorant_for(problem: Problem, mesh: Mesh, primal: Approximation, dual: Approximation, degree: int = DEFAULT_ERROR_DEGREE) -> MajorantReport:
    if isinstance(problem, RdProblem):
        return majorant_rd(mesh, problem, primal, dual, degree)
    return majorant_ec2d(mesh, problem, primal, dual, degree)


# ─── Exact errors ───────────────────────────────────────────────────────

@dataclass(frozen=True)
class ErrorDistribution:
    """Per-element squared errors of the primal and dual components."""
    primal: np.ndarray
    dual: np.ndarray

    @property
    def combined(self) -> np.ndarray:
        return self.primal + self.dual

    @property
    def total(self) -> float:
        return float(self.combined.sum())


def exact_error_distribution(
    mesh: Mesh,
    case: ManufacturedCase,
    primal: Approximation,
    dual: Approximation,
    degree: int = DEFAULT_ERROR_DEGREE,
) -> ErrorDistribution:
    """
    Element contributions of the combined norm of (exact − approximation).

    Reaction–diffusion: ρe² + ∇e·α∇e | ρ⁻¹(div d)² + d·α⁻¹d.
    Eddy current:       εe·e + μ⁻¹(rot e)² | μh² + ∇⊥h·ε⁻¹∇⊥h.
    """
    if case.primal is None or case.dual is None:
        raise ValueError(f"Case '{case.name}' has no analytic solution")
    rule = quadrature(degree)
    _, region = _points(mesh, rule)
    exact_p, exact_d = sample(case.primal, mesh, rule), sample(case.dual, mesh, rule)
    approx_p, approx_d = sample(primal, mesh, rule), sample(dual, mesh, rule)
    e, de = exact_p.value - approx_p.value, exact_p.derivative - approx_p.derivative
    d, dd = exact_d.value - approx_d.value, exact_d.derivative - approx_d.derivative
    problem = case.problem
    if isinstance(problem, RdProblem):
        rho = problem.rho.at(region)
        alpha = problem.alpha.per_element(mesh)
        alpha_inv = problem.alpha.inverse().per_element(mesh)
        primal_sq = rho * e**2 + np.einsum("tqd,tde,tqe->tq", de, alpha, de)
        dual_sq = dd**2 / rho + np.einsum("tqd,tde,tqe->tq", d, alpha_inv, d)
    else:
        mu = problem.mu.at(region)
        eps = problem.eps.per_element(mesh)
        eps_inv = problem.eps.inverse().per_element(mesh)
        primal_sq = np.einsum("tqd,tde,tqe->tq", e, eps, e) + de**2 / mu
        cograd = (exact_d.cogradient - approx_d.cogradient)
        dual_sq = mu * d**2 + np.einsum("tqd,tde,tqe->tq", cograd, eps_inv, cograd)
    return ErrorDistribution(
        primal=integrate_elements(mesh, rule, primal_sq),
        dual=integrate_elements(mesh, rule, dual_sq),
    )


def exact_combined_error(mesh: Mesh, case: ManufacturedCase, primal: Approximation, dual: Approximation, degree: int = DEFAULT_ERROR_DEGREE) -> float:
    """Combined error squared, |||(u, p) − (ũ, p̃)|||²."""
    return exact_error_distribution(mesh, case, primal, dual, degree).total


def equality_report(report: MajorantReport, exact_error_sq: float) -> MajorantReport:
    """Attach the exact error and δ = |√M − √E²| (δ_rel = δ / ‖f‖) to a report."""
    delta = abs(np.sqrt(report.global_majorant) - np.sqrt(max(exact_error_sq, 0.0)))
    delta_rel = float(delta / np.sqrt(report.f_norm_sq)) if report.f_norm_sq > 0.0 else None
    return replace(report, combined_error_sq=float(exact_error_sq), delta=float(delta), delta_rel=delta_rel)


def assess(mesh: Mesh, case: ManufacturedCase, primal: Approximation, dual: Approximation, degree: int = DEFAULT_ERROR_DEGREE) -> MajorantReport:
    """Majorant plus exact error for a manufactured case."""
    report = majorant_for(case.problem, mesh, primal, dual, degree)
    return equality_report(report, exact_combined_error(mesh, case, primal, dual, degree))


# ─── Boundary-coupled equality ──────────────────────────────────────────

@dataclass(frozen=True)
class RobinEqualityResult:
    """
    lhs = combined error² + γ‖u − ũ‖²_{Γ_R} + γ⁻¹‖n·(p − p̃)‖²_{Γ_R}; rhs = majorant.
    """
    lhs: float
    rhs: float
    combined_error_sq: float
    boundary_primal_sq: float
    boundary_flux_sq: float
    normalized: Optional[float]

    @property
    def difference(self) -> float:
        return self.lhs - self.rhs

    @property
    def relative_difference(self) -> float:
        return abs(self.difference) / self.rhs if self.rhs > 0.0 else abs(self.difference)


def _edge_traces(mesh: Mesh, case: ManufacturedCase, primal: Approximation, dual: Approximation, kind: BoundaryKind, degree: int):
    """
    Jumps e = u − ũ and n·d = n·(p − p̃) at Gauss points of the boundary
    edges of one kind, plus the quadrature weights scaled by edge length.
    """
    mask = mesh.boundary_kind == kind
    eid = mesh.boundary_edge_ids[mask]
    if len(eid) == 0:
        return np.zeros((0, 1)), np.zeros((0, 1)), np.zeros((0, 1))
    tri = mesh.edge_triangles[eid, 0]
    normals = mesh.geometry.boundary_normals[mask]
    rule = edge_quadrature(degree)
    a, b = mesh.vertices[mesh.edges[eid, 0]], mesh.vertices[mesh.edges[eid, 1]]
    x = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    e = sample_points(case.primal, mesh, tri, x).value - sample_points(primal, mesh, tri, x).value
    d = sample_points(case.dual, mesh, tri, x).value - sample_points(dual, mesh, tri, x).value
    nd = np.einsum("eqd,ed->eq", d, normals)
    weights = mesh.geometry.edge_lengths[eid][:, None] * rule.weights[None, :]
    return e, nd, weights


def _check_zero(values: np.ndarray, scale: float, what: str):
    worst = float(np.abs(values).max(initial=0.0))
    if worst > HYPOTHESIS_TOL * scale:
        raise HypothesisError(f"{what} violated (max {worst:.3e})")


def robin_equality_check(
    mesh: Mesh,
    case: ManufacturedCase,
    primal: Optional[Approximation] = None,
    dual: Optional[Approximation] = None,
    degree: int = DEFAULT_ERROR_DEGREE,
) -> RobinEqualityResult:
    """
    Both sides of the error equality with a Robin part Γ_R.

    Hypotheses, sampled at the edge Gauss points: u − ũ = 0 on Γ_D,
    n·(p − p̃) = 0 on Γ_N and n·(p − p̃) + γ(u − ũ) = 0 on Γ_R.
    The approximation defaults to the one the case carries.

    Raises:
        HypothesisError: when a sampled hypothesis fails
    """
    problem = case.problem
    if not isinstance(problem, RdProblem):
        raise HypothesisError("Robin coupling is defined for reaction–diffusion problems")
    if primal is None or dual is None:
        if case.approximation is None:
            raise HypothesisError(f"Case '{case.name}' carries no approximation pair")
        primal, dual = case.approximation
    gamma = problem.gamma

    traces = {kind: _edge_traces(mesh, case, primal, dual, kind, degree) for kind in BoundaryKind}
    scale = max(1.0, *(float(np.abs(t[0]).max(initial=0.0)) for t in traces.values()))
    e_D, _, _ = traces[BoundaryKind.DIRICHLET]
    _, nd_N, _ = traces[BoundaryKind.NEUMANN]
    e_R, nd_R, w_R = traces[BoundaryKind.ROBIN]
    _check_zero(e_D, scale, "u − ũ = 0 on Γ_D")
    _check_zero(nd_N, scale, "n·(p − p̃) = 0 on Γ_N")
    _check_zero(nd_R + gamma * e_R, scale, "n·(p − p̃) + γ(u − ũ) = 0 on Γ_R")

    boundary_primal = float(gamma * np.sum(w_R * e_R**2))
    boundary_flux = float(np.sum(w_R * nd_R**2) / gamma)
    report = majorant_rd(mesh, problem, primal, dual, degree)
    error_sq = exact_combined_error(mesh, case, primal, dual, degree)
    lhs = error_sq + boundary_primal + boundary_flux
    logger.debug(f"Robin equality '{case.name}': lhs {lhs:.12g}, rhs {report.global_majorant:.12g}")
    return RobinEqualityResult(
        lhs=lhs,
        rhs=report.global_majorant,
        combined_error_sq=error_sq,
        boundary_primal_sq=boundary_primal,
        boundary_flux_sq=boundary_flux,
        normalized=_normalized(lhs, report.f_norm_sq),
    )


# ─── Dual-mesh sharpness ────────────────────────────────────────────────

@dataclass(frozen=True)
class DualRefinementRow:
    n_dual: int
    majorant: float
    primal_error_sq: float

    @property
    def gap(self) -> float:
        return self.majorant - self.primal_error_sq


def dual_refinement_study(
    case: ManufacturedCase,
    mesh: Mesh,
    levels: int = 3,
    degree: int = DEFAULT_ERROR_DEGREE,
) -> list[DualRefinementRow]:
    """
    Fix the primal Galerkin solution on `mesh` and recompute the dual on
    successively refined meshes. The majorant approaches the primal error²
    from above; the gap is the dual error of each dual solution.
    """
    primal, _ = solve_pair(case.problem, mesh)
    rows = []
    dual_mesh = mesh
    for level in range(levels + 1):
        if level:
            dual_mesh = uniform_refine(dual_mesh)
        _, dual = solve_pair(case.problem, dual_mesh)
        report = majorant_for(case.problem, dual_mesh, primal, dual, degree)
        primal_sq = float(exact_error_distribution(dual_mesh, case, primal, dual, degree).primal.sum())
        rows.append(DualRefinementRow(dual_mesh.n_triangles, report.global_majorant, primal_sq))
        logger.info(f"Dual level {level}: {dual_mesh.n_triangles} elements, gap {rows[-1].gap:.6e}")
    return rows
