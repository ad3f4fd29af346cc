"""
adaptivity.py — Adaptive and uniform refinement drivers built on the majorant.

amr_run marks a fixed fraction of elements by either the exact element
error (manufactured cases) or the majorant distribution η_T², then refines
red-green. Convergence tables refine uniformly between rows.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from fem_spaces import Approximation
from majorant import (
    DEFAULT_ERROR_DEGREE,
    assess,
    equality_report,
    exact_combined_error,
    exact_error_distribution,
    majorant_for,
    robin_equality_check,
)
from mesh2d import Mesh, mark_fixed_fraction, refine_marked, uniform_refine
from problems import ManufacturedCase, RdProblem, gradient_average, iterative_undersolve, solve_pair
from problems.base import Problem, ProblemError

logger = logging.getLogger(__name__)

INDICATORS = ("exact", "majorant")
DEFAULT_FRACTION = 0.3
DEGREE_SWEEP = (4, 6, 8, 10)


def _unpack(target: Union[ManufacturedCase, Problem]) -> tuple[Problem, Optional[ManufacturedCase]]:
    if isinstance(target, ManufacturedCase):
        return target.problem, target
    return target, None


# ─── Approximation builders ─────────────────────────────────────────────

def _galerkin(problem: Problem, mesh: Mesh, method: str) -> tuple[Approximation, Approximation]:
    return solve_pair(problem, mesh, method=method)


def _undersolved(problem: Problem, mesh: Mesh, method: str) -> tuple[Approximation, Approximation]:
    if not isinstance(problem, RdProblem):
        raise ProblemError("Crude iterative solves are set up for reaction–diffusion only")
    return iterative_undersolve(problem, mesh)


def _averaged(problem: Problem, mesh: Mesh, method: str) -> tuple[Approximation, Approximation]:
    if not isinstance(problem, RdProblem):
        raise ProblemError("Gradient averaging is set up for reaction–diffusion only")
    u_h, _ = solve_pair(problem, mesh, method=method)
    return u_h, gradient_average(u_h, problem.alpha)


APPROXIMATIONS: dict[str, Callable[[Problem, Mesh, str], tuple[Approximation, Approximation]]] = {
    "galerkin": _galerkin,
    "undersolve": _undersolved,
    "averaged": _averaged,
}


# ─── Adaptive loop ──────────────────────────────────────────────────────

@dataclass
class AmrRecord:
    iteration: int
    n_elem: int
    global_value: float
    normalized: Optional[float] = None
    marked: int = 0
    delta: Optional[float] = None


@dataclass
class AmrResult:
    records: list[AmrRecord]
    mesh: Mesh
    primal: Approximation
    dual: Approximation
    meshes: list[Mesh] = field(default_factory=list, repr=False)


def amr_run(
    target: Union[ManufacturedCase, Problem],
    mesh: Optional[Mesh] = None,
    indicator: str = "majorant",
    fraction: float = DEFAULT_FRACTION,
    iterations: int = 9,
    degree: int = DEFAULT_ERROR_DEGREE,
    tol: float = 1e-12,
    method: str = "direct",
    separate_dual: bool = False,
    max_elements: Optional[int] = None,
) -> AmrResult:
    """
    Solve, estimate, mark and refine `iterations` times.

    Args:
        target: a manufactured case, or a bare problem for the majorant indicator
        mesh: start mesh, the problem's own initial mesh when omitted
        indicator: "exact" (element error e_T², needs a manufactured case) or "majorant" (η_T²)
        fraction: share of elements marked per step, in (0, 1]
        separate_dual: solve the dual on a uniform refinement of the primal mesh
        max_elements: stop early once a solved mesh has at least this many elements

    Returns:
        AmrResult with one record per solved mesh (iterations + 1 records unless
        max_elements ends the loop first)
    """
    if indicator not in INDICATORS:
        raise ValueError(f"Unknown indicator '{indicator}' (exact or majorant)")
    problem, case = _unpack(target)
    if indicator == "exact" and case is None:
        raise ProblemError(f"The exact indicator needs a manufactured solution for '{problem.name}'")
    mesh = mesh if mesh is not None else problem.initial_mesh()

    records, meshes = [], []
    for it in range(iterations + 1):
        primal, dual = solve_pair(problem, mesh, tol=tol, method=method)
        dual_mesh = mesh
        if separate_dual:
            dual_mesh = uniform_refine(mesh)
            _, dual = solve_pair(problem, dual_mesh, tol=tol, method=method)

        report = majorant_for(problem, dual_mesh, primal, dual, degree)
        delta = None
        if case is not None:
            distribution = exact_error_distribution(dual_mesh, case, primal, dual, degree)
            report = equality_report(report, distribution.total)
            delta = report.delta
        if indicator == "exact":
            values, value = distribution.combined, float(np.sqrt(distribution.total))
        else:
            values, value = report.eta_sq, report.sqrt_majorant
        if separate_dual:
            values = np.bincount(dual_mesh.parent_of, weights=values, minlength=mesh.n_triangles)

        meshes.append(mesh)
        record = AmrRecord(iteration=it, n_elem=mesh.n_triangles, global_value=value, normalized=report.normalized, delta=delta)
        records.append(record)
        if it < iterations and (max_elements is None or mesh.n_triangles < max_elements):
            marked = mark_fixed_fraction(values, fraction)
            record.marked = len(marked)
            logger.info(f"AMR {problem.name} [{indicator}] iter {it}: {mesh.n_triangles} elements, value {value:.6e}, marking {len(marked)}")
            mesh = refine_marked(mesh, marked).detach_parent()
        else:
            logger.info(f"AMR {problem.name} [{indicator}] iter {it}: {mesh.n_triangles} elements, value {value:.6e}")
            break
    return AmrResult(records=records, mesh=mesh, primal=primal, dual=dual, meshes=meshes)


@dataclass
class ComparisonRow:
    iteration: int
    n_opt: int
    n_maj: int

    @property
    def diff_pct(self) -> float:
        return 100.0 * abs(self.n_maj - self.n_opt) / self.n_opt


def compare_indicators(
    case: ManufacturedCase,
    fraction: float = DEFAULT_FRACTION,
    iterations: int = 9,
    degree: int = DEFAULT_ERROR_DEGREE,
    mesh: Optional[Mesh] = None,
) -> tuple[list[ComparisonRow], AmrResult, AmrResult]:
    """Run the exact and majorant indicators from the same start mesh and compare element counts."""
    mesh = mesh if mesh is not None else case.initial_mesh()
    exact = amr_run(case, mesh, "exact", fraction, iterations, degree)
    estimated = amr_run(case, mesh, "majorant", fraction, iterations, degree)
    rows = [
        ComparisonRow(a.iteration, a.n_elem, b.n_elem)
        for a, b in zip(exact.records, estimated.records)
    ]
    return rows, exact, estimated


@dataclass
class RefinementComparison:
    adaptive: list[AmrRecord]
    uniform: list[AmrRecord]


def refinement_comparison(
    target: Union[ManufacturedCase, Problem],
    fraction: float = DEFAULT_FRACTION,
    iterations: int = 9,
    uniform_levels: int = 3,
    degree: int = DEFAULT_ERROR_DEGREE,
) -> RefinementComparison:
    """Majorant trajectories under adaptive and under uniform refinement from the same start."""
    problem, _ = _unpack(target)
    mesh = problem.initial_mesh()
    adaptive = amr_run(target, mesh, "majorant", fraction, iterations, degree)
    uniform = amr_run(target, mesh, "majorant", 1.0, uniform_levels, degree)
    return RefinementComparison(adaptive=adaptive.records, uniform=uniform.records)


# ─── Tables ─────────────────────────────────────────────────────────────

@dataclass
class ConvergenceRow:
    n_elem: int
    error: Optional[float]
    majorant: float
    delta: Optional[float]
    normalized: Optional[float]


def convergence_table(
    target: Union[ManufacturedCase, Problem],
    refinements: int = 4,
    degree: int = DEFAULT_ERROR_DEGREE,
    approximation: str = "galerkin",
    mesh: Optional[Mesh] = None,
    method: str = "direct",
) -> list[ConvergenceRow]:
    """
    One row per mesh, uniformly refined between rows.

    approximation: "galerkin", "undersolve" (crude CG), "averaged" (gradient
    averaging for the flux) or "analytic" (the case's own pair, compared with
    the boundary-coupled equality).
    """
    problem, case = _unpack(target)
    if approximation != "analytic" and approximation not in APPROXIMATIONS:
        raise ValueError(f"Unknown approximation '{approximation}'")
    if approximation == "analytic" and case is None:
        raise ProblemError("Analytic approximations need a manufactured case")
    if refinements < 1:
        raise ValueError("Need at least one row")
    mesh = mesh if mesh is not None else problem.initial_mesh()

    rows = []
    for k in range(refinements):
        if k:
            mesh = uniform_refine(mesh).detach_parent()
        if approximation == "analytic":
            result = robin_equality_check(mesh, case, degree=degree)
            error, value = np.sqrt(result.lhs), np.sqrt(result.rhs)
            row = ConvergenceRow(mesh.n_triangles, float(error), float(value), float(abs(error - value)), result.normalized)
        else:
            primal, dual = APPROXIMATIONS[approximation](problem, mesh, method)
            if case is not None:
                report = assess(mesh, case, primal, dual, degree)
            else:
                report = majorant_for(problem, mesh, primal, dual, degree)
            row = ConvergenceRow(mesh.n_triangles, report.error, report.sqrt_majorant, report.delta, report.normalized)
        rows.append(row)
        logger.info(f"{problem.name} [{approximation}] {row.n_elem} elements: majorant {row.majorant:.6e}, δ {row.delta}")
    return rows


@dataclass
class QuadratureRow:
    degree: int
    error: float
    majorant: float
    delta: float


def quadrature_degree_study(
    case: ManufacturedCase,
    mesh: Optional[Mesh] = None,
    primal: Optional[Approximation] = None,
    dual: Optional[Approximation] = None,
    degrees=DEGREE_SWEEP,
) -> list[QuadratureRow]:
    """δ, error and majorant of one fixed approximation evaluated with rules of increasing degree."""
    mesh = mesh if mesh is not None else case.initial_mesh()
    if primal is None or dual is None:
        primal, dual = solve_pair(case.problem, mesh)
    rows = []
    for degree in degrees:
        report = majorant_for(case.problem, mesh, primal, dual, degree)
        report = equality_report(report, exact_combined_error(mesh, case, primal, dual, degree))
        rows.append(QuadratureRow(degree, report.error, report.sqrt_majorant, report.delta))
        logger.debug(f"Quadrature degree {degree}: δ = {report.delta:.3e}")
    return rows
