"""
fem_spaces.py — Lowest-order finite element spaces on mesh2d triangulations.

Spaces:
    P1         continuous piecewise linears, one dof per vertex
    RT0        Raviart–Thomas, dof = flux ∫_e ψ·n_e over each edge
    N0         Nédélec (Whitney), dof = circulation ∫_e E·t_e over each edge
    P1_VECTOR  two P1 components per vertex (averaged fluxes)

n_e and t_e are the global edge normal and tangent (mesh2d.Geometry). Basis
functions of RT0 / N0 carry the sign tri_edge_signs so neighbouring
triangles agree on each shared dof.

Analytic data is passed as callables f(x, region) with x of shape (..., 2) and
region the matching integer labels, so piecewise definitions can be evaluated
from either side of an interface.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from mesh2d import BoundaryKind, Mesh, ancestor_index
from quadrature import QuadratureRule, edge_quadrature, quadrature
from sparse_linalg import as_csr

logger = logging.getLogger(__name__)

DEFAULT_ASSEMBLY_DEGREE = 4
CHUNK_SIZE = 4096
THREADS = max(1, int(os.environ.get("EQUALITY_FEM_THREADS", "1")))
TRACE_TOL = 1e-12

# rotation taking a gradient to the co-gradient: ∇⊥v = (∂₂v, -∂₁v)
ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


class AssemblyError(Exception):
    """Bad coefficient, source or boundary data during assembly."""


# ─── Coefficients ───────────────────────────────────────────────────────

@dataclass(frozen=True)
class PiecewiseConstant:
    """Scalar or 2×2 SPD value per region label."""
    values: dict
    tensor: bool = False

    def __post_init__(self):
        checked = {}
        for label, value in self.values.items():
            v = np.asarray(value, dtype=float)
            if self.tensor:
                if v.ndim == 0:
                    v = v * np.eye(2)
                if v.shape != (2, 2) or not np.all(np.isfinite(v)):
                    raise AssemblyError(f"Region {label}: expected a finite 2×2 matrix, got {value!r}")
                if abs(v[0, 1] - v[1, 0]) > 1e-12 * np.abs(v).max():
                    raise AssemblyError(f"Region {label}: coefficient matrix is not symmetric")
                if np.linalg.eigvalsh(v).min() <= 0.0:
                    raise AssemblyError(f"Region {label}: coefficient matrix is not positive definite")
            else:
                if v.ndim != 0 or not np.isfinite(v) or v <= 0.0:
                    raise AssemblyError(f"Region {label}: expected a positive scalar, got {value!r}")
            checked[int(label)] = v
        object.__setattr__(self, "values", checked)

    @classmethod
    def scalar(cls, values) -> "PiecewiseConstant":
        if not isinstance(values, dict):
            return cls({0: values}, tensor=False).everywhere()
        return cls(values, tensor=False)

    @classmethod
    def matrix(cls, values) -> "PiecewiseConstant":
        if not isinstance(values, dict):
            return cls({0: values}, tensor=True).everywhere()
        return cls(values, tensor=True)

    def everywhere(self) -> "PiecewiseConstant":
        """Same value for every region label (stored under label -1)."""
        (value,) = self.values.values()
        return PiecewiseConstant({-1: value}, tensor=self.tensor)

    def inverse(self) -> "PiecewiseConstant":
        inv = {k: (np.linalg.inv(v) if self.tensor else 1.0 / v) for k, v in self.values.items()}
        return PiecewiseConstant(inv, tensor=self.tensor)

    def as_tensor(self) -> "PiecewiseConstant":
        if self.tensor:
            return self
        return PiecewiseConstant({k: v * np.eye(2) for k, v in self.values.items()}, tensor=True)

    def at(self, region: np.ndarray) -> np.ndarray:
        """Values for an array of region labels, shape region.shape (+ (2, 2))."""
        region = np.asarray(region, dtype=np.int64)
        shape = region.shape + ((2, 2) if self.tensor else ())
        out = np.empty(shape)
        if -1 in self.values:
            out[...] = self.values[-1]
            return out
        missing = set(np.unique(region).tolist()) - set(self.values)
        if missing:
            raise AssemblyError(f"No coefficient value for region(s) {sorted(missing)}")
        for label, value in self.values.items():
            out[region == label] = value
        return out

    def per_element(self, mesh: Mesh) -> np.ndarray:
        return self.at(mesh.region)


# ─── Spaces and functions ───────────────────────────────────────────────

class SpaceKind(str, Enum):
    P1 = "P1"
    RT0 = "RT0"
    N0 = "N0"
    P1_VECTOR = "P1_VECTOR"


@dataclass(frozen=True, eq=False)
class FeSpace:
    """
    A lowest-order space on a mesh.

    `essential` lists the boundary kinds whose dofs are constrained: vertices
    incident to such edges for P1, the edges themselves for RT0 / N0.
    """
    kind: SpaceKind
    mesh: Mesh
    essential: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", SpaceKind(self.kind))
        object.__setattr__(self, "essential", tuple(BoundaryKind(k) for k in self.essential))
        if self.kind is SpaceKind.P1_VECTOR and self.essential:
            raise AssemblyError("P1_VECTOR spaces carry no essential conditions")

    @property
    def dof_count(self) -> int:
        if self.kind is SpaceKind.P1:
            return self.mesh.n_vertices
        if self.kind is SpaceKind.P1_VECTOR:
            return 2 * self.mesh.n_vertices
        return self.mesh.n_edges

    @cached_property
    def essential_dofs(self) -> np.ndarray:
        if not self.essential:
            return np.zeros(0, dtype=np.int64)
        if self.kind is SpaceKind.P1:
            return self.mesh.vertices_of_kind(*self.essential)
        return np.sort(self.mesh.edges_of_kind(*self.essential))

    @property
    def essential_mask(self) -> np.ndarray:
        mask = np.zeros(self.dof_count, dtype=bool)
        mask[self.essential_dofs] = True
        return mask

    @property
    def local_dofs(self) -> np.ndarray:
        """(T, 3) global dofs of the three local basis functions."""
        if self.kind in (SpaceKind.P1, SpaceKind.P1_VECTOR):
            return self.mesh.triangles
        return self.mesh.tri_edges


@dataclass(eq=False)
class FeFunction:
    space: FeSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if len(self.coefficients) != self.space.dof_count:
            raise AssemblyError(
                f"{len(self.coefficients)} coefficients for a {self.space.kind.value} space "
                f"with {self.space.dof_count} dofs"
            )

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    @classmethod
    def zero(cls, space: FeSpace) -> "FeFunction":
        return cls(space, np.zeros(space.dof_count))


@dataclass(frozen=True)
class AnalyticField:
    """
    Analytic value and derivative callables.

    The derivative is the one the slot needs: gradient for a potential,
    divergence for a flux, rotation for an H(rot) field.
    """
    value: Field
    derivative: Field


Approximation = Union[FeFunction, AnalyticField]


# ─── Reference data ─────────────────────────────────────────────────────

def quadrature_points(mesh: Mesh, rule: QuadratureRule, elements: Optional[np.ndarray] = None) -> np.ndarray:
    """(T, Q, 2) physical quadrature points."""
    tris = mesh.triangles if elements is None else mesh.triangles[elements]
    return np.einsum("qi,tid->tqd", rule.barycentric, mesh.vertices[tris])


def integrate_elements(mesh: Mesh, rule: QuadratureRule, integrand: np.ndarray) -> np.ndarray:
    """Per-element integrals of values sampled at the rule's points, (T, Q) → (T,)."""
    return 2.0 * mesh.geometry.areas * (integrand @ rule.weights)


def barycentric_of(mesh: Mesh, elements: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Barycentric coordinates (T, Q, 3) of points x (T, Q, 2) in the given elements."""
    p = mesh.vertices[mesh.triangles[elements]]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    local = np.einsum("tij,tqj->tqi", np.linalg.inv(J), x - p[:, None, 0])
    return np.concatenate([1.0 - local.sum(axis=-1, keepdims=True), local], axis=-1)


def _basis_derivative(space: FeSpace, elements: np.ndarray) -> np.ndarray:
    """Gradients (T, 3, 2) for P1, divergences / rotations (T, 3) for RT0 / N0."""
    mesh = space.mesh
    grad = mesh.geometry.grad_lambda[elements]
    if space.kind in (SpaceKind.P1, SpaceKind.P1_VECTOR):
        return grad
    signs = mesh.tri_edge_signs[elements]
    if space.kind is SpaceKind.RT0:
        return signs / mesh.geometry.areas[elements][:, None]
    gi, gj = grad[:, [1, 2, 0], :], grad[:, [2, 0, 1], :]
    return 2.0 * signs * (gi[..., 0] * gj[..., 1] - gi[..., 1] * gj[..., 0])


def _basis(space: FeSpace, elements: np.ndarray, bary: np.ndarray, x: np.ndarray):
    """
    Basis values on the given elements at barycentric points `bary` (T, Q, 3)
    with physical positions `x` (T, Q, 2).

    Returns:
        values (T, Q, 3) for P1 or (T, Q, 3, 2) for RT0 / N0, and the
        derivatives from _basis_derivative
    """
    mesh = space.mesh
    deriv = _basis_derivative(space, elements)
    if space.kind in (SpaceKind.P1, SpaceKind.P1_VECTOR):
        return bary, deriv
    signs = mesh.tri_edge_signs[elements]
    if space.kind is SpaceKind.RT0:
        # s_k (x - a_k) / (2|T|)
        corners = mesh.vertices[mesh.triangles[elements]]
        scale = signs / (2.0 * mesh.geometry.areas[elements][:, None])
        return (x[:, :, None, :] - corners[:, None, :, :]) * scale[:, None, :, None], deriv
    # s_k (λ_i ∇λ_j - λ_j ∇λ_i), i = k+1, j = k+2
    grad = mesh.geometry.grad_lambda[elements]
    i, j = [1, 2, 0], [2, 0, 1]
    values = bary[:, :, i, None] * grad[:, None, j, :] - bary[:, :, j, None] * grad[:, None, i, :]
    return values * signs[:, None, :, None], deriv


# ─── Evaluation ─────────────────────────────────────────────────────────

@dataclass
class Sample:
    """
    Values of an approximation at quadrature points.

    value: (T, Q) scalar or (T, Q, 2) vector
    derivative: (T, Q, 2) gradient, or (T, Q) divergence / rotation
    """
    value: np.ndarray
    derivative: np.ndarray

    @property
    def cogradient(self) -> np.ndarray:
        return self.derivative @ ROT.T


def _sample_fe(fun: FeFunction, elements: np.ndarray, bary: np.ndarray, x: np.ndarray) -> Sample:
    space = fun.space
    Q = bary.shape[1]
    if space.kind is SpaceKind.P1_VECTOR:
        nodal = fun.coefficients.reshape(-1, 2)[fun.mesh.triangles[elements]]   # (T, 3, 2)
        value = np.einsum("tqi,tid->tqd", bary, nodal)
        grad = fun.mesh.geometry.grad_lambda[elements]
        div = np.einsum("tid,tid->t", grad, nodal)
        return Sample(value, np.repeat(div[:, None], Q, axis=1))
    coeff = fun.coefficients[space.local_dofs[elements]]                       # (T, 3)
    values, deriv = _basis(space, elements, bary, x)
    if space.kind is SpaceKind.P1:
        value = np.einsum("tqi,ti->tq", values, coeff)
        grad = np.einsum("tid,ti->td", deriv, coeff)
        return Sample(value, np.repeat(grad[:, None, :], Q, axis=1))
    value = np.einsum("tqid,ti->tqd", values, coeff)
    scalar = np.einsum("ti,ti->t", deriv, coeff)
    return Sample(value, np.repeat(scalar[:, None], Q, axis=1))


def sample(approx: Approximation, mesh: Mesh, rule: QuadratureRule) -> Sample:
    """
    Evaluate an approximation at the quadrature points of `mesh`.

    FeFunctions may live on `mesh` itself or on any ancestor of it in a
    refinement hierarchy.
    """
    x = quadrature_points(mesh, rule)
    elements = np.arange(mesh.n_triangles)
    if isinstance(approx, FeFunction) and approx.mesh is mesh:
        bary = np.broadcast_to(rule.barycentric, (mesh.n_triangles,) + rule.barycentric.shape)
        return _sample_fe(approx, elements, bary, x)
    return sample_points(approx, mesh, elements, x)


def sample_points(approx: Approximation, mesh: Mesh, elements: np.ndarray, x: np.ndarray) -> Sample:
    """
    Evaluate an approximation at points x (T, Q, 2), row t lying in triangle
    elements[t] of `mesh`. Used for edge traces as well as interior points.
    """
    elements = np.asarray(elements, dtype=np.int64)
    if isinstance(approx, AnalyticField):
        region = np.broadcast_to(mesh.region[elements][:, None], x.shape[:2])
        return Sample(np.asarray(approx.value(x, region)), np.asarray(approx.derivative(x, region)))
    host = elements if approx.mesh is mesh else ancestor_index(mesh, approx.mesh)[elements]
    return _sample_fe(approx, host, barycentric_of(approx.mesh, host, x), x)


@dataclass
class Evaluation:
    value: Union[float, np.ndarray]
    gradient: Optional[np.ndarray] = None   # P1
    cogradient: Optional[np.ndarray] = None # P1
    div: Optional[float] = None             # RT0, P1_VECTOR
    rot: Optional[float] = None             # N0


def evaluate(fun: FeFunction, triangle: int, point) -> Evaluation:
    """Value and derivative of `fun` at a barycentric point of one triangle."""
    bary = np.asarray(point, dtype=float).reshape(1, 1, 3)
    elements = np.array([triangle])
    corners = fun.mesh.vertices[fun.mesh.triangles[elements]]
    x = np.einsum("tqi,tid->tqd", bary, corners)
    s = _sample_fe(fun, elements, bary, x)
    value = s.value[0, 0]
    kind = fun.space.kind
    if kind is SpaceKind.P1:
        grad = s.derivative[0, 0]
        return Evaluation(value=float(value), gradient=grad, cogradient=ROT @ grad)
    if kind is SpaceKind.N0:
        return Evaluation(value=value, rot=float(s.derivative[0, 0]))
    return Evaluation(value=value, div=float(s.derivative[0, 0]))


# ─── Assembly ───────────────────────────────────────────────────────────

FORMS = {
    SpaceKind.P1: ("mass", "stiffness", "cograd_stiffness"),
    SpaceKind.RT0: ("mass", "divdiv"),
    SpaceKind.N0: ("mass", "curlcurl"),
}


def _chunks(n: int) -> list[np.ndarray]:
    return [np.arange(s, min(s + CHUNK_SIZE, n)) for s in range(0, n, CHUNK_SIZE)]


def _map_chunks(fn, n: int) -> list:
    """Apply fn to element chunks, in order, optionally on worker threads."""
    chunks = _chunks(n)
    if THREADS > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=THREADS) as pool:
            return list(pool.map(fn, chunks))
    return [fn(c) for c in chunks]


def _element_matrices(space: FeSpace, form: str, weight: PiecewiseConstant, rule: QuadratureRule, elements: np.ndarray) -> np.ndarray:
    mesh = space.mesh
    area = mesh.geometry.areas[elements]
    w = weight.at(mesh.region[elements])
    if form in ("divdiv", "curlcurl"):
        d = _basis_derivative(space, elements)
        return (area * w)[:, None, None] * d[:, :, None] * d[:, None, :]
    if space.kind is SpaceKind.P1 and form in ("stiffness", "cograd_stiffness"):
        grad = mesh.geometry.grad_lambda[elements]
        if form == "cograd_stiffness":
            grad = grad @ ROT.T
        W = weight.as_tensor().at(mesh.region[elements])
        return area[:, None, None] * np.einsum("tid,tde,tje->tij", grad, W, grad)
    # mass forms by quadrature
    bary = np.broadcast_to(rule.barycentric, (len(elements),) + rule.barycentric.shape)
    x = quadrature_points(mesh, rule, elements)
    values, _ = _basis(space, elements, bary, x)
    scale = 2.0 * area
    if space.kind is SpaceKind.P1:
        return (scale * w)[:, None, None] * np.einsum("q,tqi,tqj->tij", rule.weights, values, values)
    W = weight.as_tensor().at(mesh.region[elements])
    return scale[:, None, None] * np.einsum("q,tqid,tde,tqje->tij", rule.weights, values, W, values)


def assemble(space: FeSpace, form: str, weight: PiecewiseConstant, degree: int = DEFAULT_ASSEMBLY_DEGREE) -> sp.csr_matrix:
    """
    Assemble a weighted bilinear form on `space`.

    Forms (w is the integrand weight, pass an inverse when the form needs one):
        P1:  mass ∫w u v, stiffness ∫∇u·w∇v, cograd_stiffness ∫∇⊥u·w∇⊥v
        RT0: mass ∫p·wψ, divdiv ∫w div p div ψ
        N0:  mass ∫E·wΦ, curlcurl ∫w rot E rot Φ
    """
    if form not in FORMS.get(space.kind, ()):
        raise AssemblyError(f"Form '{form}' is not defined on {space.kind.value}")
    rule = quadrature(degree)
    dofs = space.local_dofs
    blocks = _map_chunks(lambda el: _element_matrices(space, form, weight, rule, el), space.mesh.n_triangles)
    K = np.concatenate(blocks) if blocks else np.zeros((0, 3, 3))
    rows = np.repeat(dofs[:, :, None], 3, axis=2)
    cols = np.repeat(dofs[:, None, :], 3, axis=1)
    n = space.dof_count
    matrix = sp.coo_matrix((K.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n))
    logger.debug(f"Assembled {space.kind.value} {form}: {n} dofs, {space.mesh.n_triangles} elements")
    return as_csr(matrix)


def _evaluate_source(source: Field, mesh: Mesh, x: np.ndarray, elements: np.ndarray) -> np.ndarray:
    region = np.broadcast_to(mesh.region[elements][:, None], x.shape[:2])
    values = np.asarray(source(x, region), dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        t, q = np.argwhere(bad)[0][:2]
        raise AssemblyError(f"Non-finite source value in element {elements[t]} at point {tuple(x[t, q])}")
    return values


def assemble_load(
    space: FeSpace,
    source: Field,
    form: str = "value",
    weight: Optional[PiecewiseConstant] = None,
    degree: int = DEFAULT_ASSEMBLY_DEGREE,
) -> np.ndarray:
    """
    Assemble a load vector.

    Forms:
        P1  value   ∫f φ
        RT0 div     -∫w f div ψ
        N0  value   ∫J·Φ
        P1  cograd  ∫wJ·∇⊥φ
    """
    mesh = space.mesh
    rule = quadrature(degree)

    def chunk(elements):
        x = quadrature_points(mesh, rule, elements)
        f = _evaluate_source(source, mesh, x, elements)
        scale = 2.0 * mesh.geometry.areas[elements]
        bary = np.broadcast_to(rule.barycentric, (len(elements),) + rule.barycentric.shape)
        if space.kind is SpaceKind.P1 and form == "value":
            return scale[:, None] * np.einsum("q,tq,tqi->ti", rule.weights, f, bary)
        if space.kind is SpaceKind.P1 and form == "cograd":
            W = (weight or PiecewiseConstant.matrix(1.0)).as_tensor().at(mesh.region[elements])
            cograd = mesh.geometry.grad_lambda[elements] @ ROT.T
            wf = np.einsum("tde,tqe->tqd", W, f)
            return scale[:, None] * np.einsum("q,tqd,tid->ti", rule.weights, wf, cograd)
        if space.kind is SpaceKind.RT0 and form == "div":
            w = (weight or PiecewiseConstant.scalar(1.0)).at(mesh.region[elements])
            div = _basis_derivative(space, elements)
            return -(scale * w * (f @ rule.weights))[:, None] * div
        if space.kind is SpaceKind.N0 and form == "value":
            values, _ = _basis(space, elements, bary, x)
            return scale[:, None] * np.einsum("q,tqd,tqid->ti", rule.weights, f, values)
        raise AssemblyError(f"Load form '{form}' is not defined on {space.kind.value}")

    local = np.concatenate(_map_chunks(chunk, mesh.n_triangles)) if mesh.n_triangles else np.zeros((0, 3))
    load = np.zeros(space.dof_count)
    np.add.at(load, space.local_dofs.ravel(), local.ravel())
    return load


def boundary_flux_load(space: FeSpace, data: Field, kinds=(BoundaryKind.DIRICHLET,), degree: int = 3) -> np.ndarray:
    """RT0 load ∫_Γ g n·ψ over boundary edges of the given kinds (outward n)."""
    if space.kind is not SpaceKind.RT0:
        raise AssemblyError("Boundary flux loads are defined on RT0 only")
    mesh = space.mesh
    load = np.zeros(space.dof_count)
    mask = np.isin(mesh.boundary_kind, [int(k) for k in kinds])
    if not np.any(mask):
        return load
    eid = mesh.boundary_edge_ids[mask]
    tri = mesh.edge_triangles[eid, 0]
    k = np.argmax(mesh.tri_edges[tri] == eid[:, None], axis=1)
    sign = mesh.tri_edge_signs[tri, k]
    rule = edge_quadrature(degree)
    a, b = mesh.vertices[mesh.edges[eid, 0]], mesh.vertices[mesh.edges[eid, 1]]
    x = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    region = np.broadcast_to(mesh.region[tri][:, None], x.shape[:2])
    g = np.asarray(data(x, region), dtype=float)
    # n_out·ψ = s/|e| on the edge, so ∫_e g n_out·ψ = s · mean(g)
    np.add.at(load, eid, sign * (g @ rule.weights))
    return load


# ─── Essential conditions ───────────────────────────────────────────────

@dataclass
class ConstrainedSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n: int

    def expand(self, x_free) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.free] = x_free
        x[self.fixed] = self.fixed_values
        return x


def apply_essential(space: FeSpace, matrix, rhs, trace=None) -> ConstrainedSystem:
    """
    Eliminate the essential dofs of `space` symmetrically.

    Args:
        trace: full-length dof vector of prescribed values (zero if omitted);
            nonzero entries outside the essential dofs are rejected
    """
    n = space.dof_count
    fixed = space.essential_dofs
    mask = space.essential_mask
    g = np.zeros(n) if trace is None else np.asarray(trace, dtype=float).reshape(-1)
    if len(g) != n:
        raise AssemblyError(f"Trace has {len(g)} entries for {n} dofs")
    if np.any(g[~mask] != 0.0):
        raise AssemblyError("Trace data given on dofs that carry no essential condition")
    free = np.flatnonzero(~mask)
    A = as_csr(matrix)
    b = np.asarray(rhs, dtype=float) - A @ g
    return ConstrainedSystem(
        matrix=as_csr(A[free][:, free]),
        rhs=b[free],
        free=free,
        fixed=fixed,
        fixed_values=g[fixed],
        n=n,
    )


# ─── Interpolation ──────────────────────────────────────────────────────

def _check_two_sided(primary: np.ndarray, other: np.ndarray, what: str):
    scale = max(1.0, float(np.abs(primary).max(initial=0.0)))
    gap = np.abs(primary - other)
    if np.any(gap > TRACE_TOL * scale):
        where = int(np.argmax(gap.reshape(len(gap), -1).max(axis=1)))
        raise AssemblyError(f"Field is not single-valued on {what} {where} (jump {gap.max():.3e})")


def _vertex_values(space: FeSpace, fld: Field) -> np.ndarray:
    mesh = space.mesh
    x = mesh.vertices[mesh.triangles]                                       # (T, 3, 2)
    region = np.broadcast_to(mesh.region[:, None], x.shape[:2])
    values = np.asarray(fld(x, region), dtype=float)
    comps = values.reshape(mesh.n_triangles * 3, -1)
    idx = mesh.triangles.ravel()
    hi = np.full((mesh.n_vertices, comps.shape[1]), -np.inf)
    lo = np.full((mesh.n_vertices, comps.shape[1]), np.inf)
    np.maximum.at(hi, idx, comps)
    np.minimum.at(lo, idx, comps)
    _check_two_sided(hi, lo, "vertex")
    return hi


def _edge_moments(space: FeSpace, fld: Field, direction: np.ndarray, degree: int) -> np.ndarray:
    mesh = space.mesh
    rule = edge_quadrature(degree)
    a, b = mesh.vertices[mesh.edges[:, 0]], mesh.vertices[mesh.edges[:, 1]]
    x = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    length = mesh.geometry.edge_lengths

    def moment(tris):
        region = np.broadcast_to(mesh.region[tris][:, None], x.shape[:2])
        v = np.asarray(fld(x, region), dtype=float)
        return length * np.einsum("q,eqd,ed->e", rule.weights, v, direction)

    adj = mesh.edge_triangles
    first = moment(adj[:, 0])
    other_tri = np.where(adj[:, 1] >= 0, adj[:, 1], adj[:, 0])
    _check_two_sided(first, moment(other_tri), "edge")
    return first


def interpolate_analytic(space: FeSpace, fld: Field, degree: int = 3) -> FeFunction:
    """
    Canonical interpolation: vertex values (P1, P1_VECTOR), edge flux (RT0) or
    edge circulation (N0) by Gauss quadrature on each edge.

    Dof functionals are evaluated from both sides of interior entities and must
    agree; piecewise fields have to be single-valued there.
    """
    geo = space.mesh.geometry
    if space.kind is SpaceKind.P1:
        coeff = _vertex_values(space, fld)[:, 0]
    elif space.kind is SpaceKind.P1_VECTOR:
        coeff = _vertex_values(space, fld).reshape(-1)
    elif space.kind is SpaceKind.RT0:
        coeff = _edge_moments(space, fld, geo.edge_normals, degree)
    else:
        coeff = _edge_moments(space, fld, geo.edge_tangents, degree)
    return FeFunction(space, coeff)


def essential_trace(space: FeSpace, data: Field) -> np.ndarray:
    """Full dof vector holding the interpolant of `data` on the essential dofs only."""
    trace = np.zeros(space.dof_count)
    if len(space.essential_dofs):
        trace[space.essential_dofs] = interpolate_analytic(space, data).coefficients[space.essential_dofs]
    return trace
