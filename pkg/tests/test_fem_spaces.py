import numpy as np
import pytest

from fem_spaces import (
    AnalyticField,
    AssemblyError,
    FeFunction,
    FeSpace,
    PiecewiseConstant,
    SpaceKind,
    apply_essential,
    assemble,
    assemble_load,
    boundary_flux_load,
    evaluate,
    integrate_elements,
    interpolate_analytic,
    quadrature_points,
    sample,
)
from mesh2d import BoundaryKind, rect_structured, uniform_refine
from quadrature import quadrature
from sparse_linalg import symmetry_defect

ONE = PiecewiseConstant.scalar(1.0)
IDENTITY = PiecewiseConstant.matrix(np.eye(2))


def _constant_vector(value):
    value = np.asarray(value, dtype=float)
    return lambda x, region: np.broadcast_to(value, x.shape).copy()


def _zero_scalar(x, region):
    return np.zeros(x.shape[:-1])


# ─── Coefficients ───────────────────────────────────────────────────────

def test_piecewise_constant_lookup():
    rho = PiecewiseConstant.scalar({0: 1.0, 1: 10.0})
    assert rho.at(np.array([1, 0, 1])).tolist() == [10.0, 1.0, 10.0]
    assert rho.inverse().at(np.array([1]))[0] == pytest.approx(0.1)
    assert rho.as_tensor().at(np.array([1]))[0].tolist() == [[10.0, 0.0], [0.0, 10.0]]


def test_piecewise_constant_everywhere():
    alpha = PiecewiseConstant.matrix([[2.0, 0.0], [0.0, 3.0]])
    assert alpha.at(np.array([0, 7, 42])).shape == (3, 2, 2)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.inf])
def test_piecewise_constant_rejects_bad_scalar(bad):
    with pytest.raises(AssemblyError):
        PiecewiseConstant.scalar({0: bad})


def test_piecewise_constant_rejects_non_spd_matrix():
    with pytest.raises(AssemblyError):
        PiecewiseConstant.matrix({0: [[1.0, 2.0], [2.0, 1.0]]})
    with pytest.raises(AssemblyError):
        PiecewiseConstant.matrix({0: [[1.0, 0.5], [0.0, 1.0]]})


def test_piecewise_constant_missing_region():
    with pytest.raises(AssemblyError, match="region"):
        PiecewiseConstant.scalar({0: 1.0}).at(np.array([0, 3]))


# ─── Spaces ─────────────────────────────────────────────────────────────

def test_dof_counts(small_mesh):
    assert FeSpace(SpaceKind.P1, small_mesh).dof_count == 25
    assert FeSpace(SpaceKind.RT0, small_mesh).dof_count == small_mesh.n_edges == 56
    assert FeSpace(SpaceKind.P1_VECTOR, small_mesh).dof_count == 50


def test_essential_dofs(small_mesh):
    p1 = FeSpace(SpaceKind.P1, small_mesh, essential=(BoundaryKind.DIRICHLET,))
    assert len(p1.essential_dofs) == 16
    rt = FeSpace(SpaceKind.RT0, small_mesh, essential=(BoundaryKind.NEUMANN,))
    assert len(rt.essential_dofs) == 0


def test_vector_space_has_no_essential_conditions(small_mesh):
    with pytest.raises(AssemblyError):
        FeSpace(SpaceKind.P1_VECTOR, small_mesh, essential=(BoundaryKind.DIRICHLET,))


def test_function_length_checked(small_mesh):
    with pytest.raises(AssemblyError):
        FeFunction(FeSpace(SpaceKind.P1, small_mesh), np.zeros(3))


# ─── Assembly ───────────────────────────────────────────────────────────

@pytest.mark.parametrize("kind, form, weight", [
    (SpaceKind.P1, "mass", ONE),
    (SpaceKind.P1, "stiffness", IDENTITY),
    (SpaceKind.P1, "cograd_stiffness", PiecewiseConstant.matrix([[2.0, 0.5], [0.5, 1.0]])),
    (SpaceKind.RT0, "mass", PiecewiseConstant.matrix([[1.0, 0.0], [0.0, 5.0]])),
    (SpaceKind.RT0, "divdiv", ONE),
    (SpaceKind.N0, "mass", IDENTITY),
    (SpaceKind.N0, "curlcurl", ONE),
])
def test_assembled_matrices_are_symmetric(small_mesh, kind, form, weight):
    matrix = assemble(FeSpace(kind, small_mesh), form, weight)
    assert symmetry_defect(matrix) <= 1e-13


def test_p1_mass_integrates_one(small_mesh):
    mass = assemble(FeSpace(SpaceKind.P1, small_mesh), "mass", ONE)
    assert mass.sum() == pytest.approx(1.0, rel=1e-13)


def test_p1_stiffness_kills_constants(small_mesh):
    stiffness = assemble(FeSpace(SpaceKind.P1, small_mesh), "stiffness", IDENTITY)
    assert np.abs(stiffness @ np.ones(small_mesh.n_vertices)).max() <= 1e-12


def test_rt0_divdiv_kernel_dimension():
    mesh = rect_structured(2, 2)
    divdiv = assemble(FeSpace(SpaceKind.RT0, mesh), "divdiv", ONE).toarray()
    # div maps RT0 onto the piecewise constants
    assert np.linalg.matrix_rank(divdiv) == mesh.n_triangles
    assert mesh.n_edges - mesh.n_triangles == 8


def test_n0_curlcurl_kernel_is_gradients():
    mesh = rect_structured(2, 2)
    curlcurl = assemble(FeSpace(SpaceKind.N0, mesh), "curlcurl", ONE).toarray()
    assert mesh.n_edges - np.linalg.matrix_rank(curlcurl) == mesh.n_vertices - 1


def test_unknown_form_rejected(small_mesh):
    with pytest.raises(AssemblyError):
        assemble(FeSpace(SpaceKind.RT0, small_mesh), "curlcurl", ONE)


def test_n0_load_on_one_triangle(single_triangle):
    space = FeSpace(SpaceKind.N0, single_triangle)
    load = assemble_load(space, _constant_vector([1.0, 0.0]), "value")
    # edges (0,1), (0,2), (1,2); ∫λ = |T|/3 on each Whitney term
    assert load == pytest.approx([1.0 / 3.0, 1.0 / 6.0, -1.0 / 6.0], abs=1e-15)


def test_rt0_div_load_of_constant(single_triangle):
    space = FeSpace(SpaceKind.RT0, single_triangle)
    load = assemble_load(space, lambda x, r: np.ones(x.shape[:-1]), "div")
    # -∫ div ψ_e = -∫_e ψ·n_e = -(±1) per edge
    assert np.abs(load).tolist() == pytest.approx([1.0, 1.0, 1.0])


def test_non_finite_source_rejected(small_mesh):
    with pytest.raises(AssemblyError, match="Non-finite"):
        assemble_load(FeSpace(SpaceKind.P1, small_mesh), lambda x, r: np.full(x.shape[:-1], np.nan))


def test_unknown_load_form_rejected(small_mesh):
    with pytest.raises(AssemblyError):
        assemble_load(FeSpace(SpaceKind.N0, small_mesh), _constant_vector([1.0, 0.0]), "div")


def test_boundary_flux_load_of_constant_trace(small_mesh):
    space = FeSpace(SpaceKind.RT0, small_mesh)
    # with ψ = Σ ψ_e every boundary edge contributes ±|e|·g/|e|
    load = boundary_flux_load(space, lambda x, r: np.ones(x.shape[:-1]))
    assert np.count_nonzero(load) == 16
    assert np.abs(load).sum() == pytest.approx(16.0)
    assert np.all(load[np.abs(load) > 0] ** 2 == pytest.approx(1.0))


def test_apply_essential_with_trace(small_mesh):
    space = FeSpace(SpaceKind.P1, small_mesh, essential=(BoundaryKind.DIRICHLET,))
    matrix = assemble(space, "stiffness", IDENTITY) + assemble(space, "mass", ONE)
    trace = np.zeros(space.dof_count)
    trace[space.essential_dofs] = 2.0
    system = apply_essential(space, matrix, np.zeros(space.dof_count), trace)
    assert len(system.free) == 9
    x = system.expand(np.zeros(9))
    assert np.all(x[space.essential_dofs] == 2.0)


def test_apply_essential_rejects_trace_on_free_dofs(small_mesh):
    space = FeSpace(SpaceKind.P1, small_mesh, essential=(BoundaryKind.DIRICHLET,))
    trace = np.zeros(space.dof_count)
    trace[space.essential_mask.argmin()] = 1.0
    with pytest.raises(AssemblyError):
        apply_essential(space, np.eye(space.dof_count), np.zeros(space.dof_count), trace)


# ─── Evaluation and interpolation ───────────────────────────────────────

def test_evaluate_linear_p1(small_mesh):
    space = FeSpace(SpaceKind.P1, small_mesh)
    fun = FeFunction(space, 2.0 * small_mesh.vertices[:, 0] + 3.0 * small_mesh.vertices[:, 1])
    ev = evaluate(fun, 5, [1 / 3, 1 / 3, 1 / 3])
    c = small_mesh.centroids[5]
    assert ev.value == pytest.approx(2.0 * c[0] + 3.0 * c[1])
    assert ev.gradient == pytest.approx([2.0, 3.0])
    assert ev.cogradient == pytest.approx([3.0, -2.0])


def test_interpolation_reproduces_linear_p1(small_mesh):
    fun = interpolate_analytic(FeSpace(SpaceKind.P1, small_mesh), lambda x, r: 1.0 + x[..., 0] - 2.0 * x[..., 1])
    s = sample(fun, small_mesh, quadrature(3))
    x = quadrature_points(small_mesh, quadrature(3))
    assert np.allclose(s.value, 1.0 + x[..., 0] - 2.0 * x[..., 1], atol=1e-14)


@pytest.mark.parametrize("kind", [SpaceKind.RT0, SpaceKind.N0, SpaceKind.P1_VECTOR])
def test_vector_interpolation_reproduces_constants(small_mesh, kind):
    fun = interpolate_analytic(FeSpace(kind, small_mesh), _constant_vector([1.0, 2.0]))
    s = sample(fun, small_mesh, quadrature(4))
    assert np.allclose(s.value, [1.0, 2.0], atol=1e-13)
    assert np.allclose(s.derivative, 0.0, atol=1e-12)


def test_rt0_interpolation_divergence():
    mesh = rect_structured(3, 3)
    fun = interpolate_analytic(FeSpace(SpaceKind.RT0, mesh), lambda x, r: x.copy())
    s = sample(fun, mesh, quadrature(2))
    assert np.allclose(s.derivative, 2.0, atol=1e-12)


def test_discontinuous_field_rejected():
    mesh = rect_structured(2, 2, region_fn=lambda c: (c[:, 0] > 0.5).astype(int))
    with pytest.raises(AssemblyError, match="single-valued"):
        interpolate_analytic(FeSpace(SpaceKind.P1, mesh), lambda x, region: region.astype(float))


def test_tangentially_continuous_field_accepted_in_n0():
    # normal component jumps across x₁ = ½, tangential one does not
    mesh = rect_structured(2, 2, region_fn=lambda c: (c[:, 0] > 0.5).astype(int))

    def field(x, region):
        return np.stack([1.0 + region, np.ones(region.shape)], axis=-1)

    fun = interpolate_analytic(FeSpace(SpaceKind.N0, mesh), field)
    assert np.all(np.isfinite(fun.coefficients))
    with pytest.raises(AssemblyError):
        interpolate_analytic(FeSpace(SpaceKind.RT0, mesh), field)


def test_sample_on_refined_mesh_matches_coarse_function():
    coarse = rect_structured(3, 3)
    fun = FeFunction(FeSpace(SpaceKind.P1, coarse), coarse.vertices[:, 0] ** 2)
    fine = uniform_refine(coarse)
    rule = quadrature(2)
    on_fine = sample(fun, fine, rule)
    # integrals agree since the coarse function is piecewise linear on the fine mesh too
    coarse_int = integrate_elements(coarse, rule, sample(fun, coarse, rule).value).sum()
    fine_int = integrate_elements(fine, rule, on_fine.value).sum()
    assert fine_int == pytest.approx(coarse_int, rel=1e-13)


def test_analytic_field_sampled_with_regions():
    field = AnalyticField(lambda x, r: r.astype(float), _zero_scalar)
    mesh = rect_structured(2, 2, region_fn=lambda c: np.arange(len(c)))
    s = sample(field, mesh, quadrature(2))
    assert np.array_equal(s.value[:, 0], np.arange(mesh.n_triangles, dtype=float))


# ─── Integration by parts ───────────────────────────────────────────────

def test_p1_rt0_integration_by_parts(rng):
    mesh = rect_structured(4, 3, region_fn=lambda c: (c[:, 0] > 0.5).astype(int))
    u_space = FeSpace(SpaceKind.P1, mesh, essential=(BoundaryKind.DIRICHLET,))
    coeff = rng.standard_normal(u_space.dof_count)
    coeff[u_space.essential_dofs] = 0.0
    u = FeFunction(u_space, coeff)
    psi = FeFunction(FeSpace(SpaceKind.RT0, mesh), rng.standard_normal(mesh.n_edges))
    rule = quadrature(2)
    su, sp_ = sample(u, mesh, rule), sample(psi, mesh, rule)
    integrand = np.einsum("tqd,tqd->tq", su.derivative, sp_.value) + su.value * sp_.derivative
    assert abs(integrate_elements(mesh, rule, integrand).sum()) <= 1e-11


def test_n0_p1_integration_by_parts(rng):
    mesh = rect_structured(3, 4)
    h_space = FeSpace(SpaceKind.P1, mesh, essential=(BoundaryKind.DIRICHLET,))
    coeff = rng.standard_normal(h_space.dof_count)
    coeff[h_space.essential_dofs] = 0.0
    H = FeFunction(h_space, coeff)
    E = FeFunction(FeSpace(SpaceKind.N0, mesh), rng.standard_normal(mesh.n_edges))
    rule = quadrature(2)
    sH, sE = sample(H, mesh, rule), sample(E, mesh, rule)
    # ∫E·∇⊥H = ∫H rot E when H vanishes on the boundary
    integrand = np.einsum("tqd,tqd->tq", sE.value, sH.cogradient) - sH.value * sE.derivative
    assert abs(integrate_elements(mesh, rule, integrand).sum()) <= 1e-11
