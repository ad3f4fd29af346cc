import numpy as np
import pytest

from adaptivity import (
    amr_run,
    compare_indicators,
    convergence_table,
    quadrature_degree_study,
    refinement_comparison,
)
from problems import ProblemError, ec_ex4, rd_poly_2d, rd_robin, scenario_ex6, scenario_ex7, scenario_ex8


# ─── Adaptive loop ──────────────────────────────────────────────────────

def test_full_marking_is_uniform_refinement():
    result = amr_run(rd_poly_2d(), fraction=1.0, iterations=2)
    assert [r.n_elem for r in result.records] == [200, 800, 3200]
    assert [r.marked for r in result.records] == [200, 800, 0]
    values = [r.global_value for r in result.records]
    assert values[0] > values[1] > values[2]
    assert all(r.delta <= 1e-9 for r in result.records)


def test_amr_is_deterministic():
    first = amr_run(scenario_ex7(), iterations=2)
    second = amr_run(scenario_ex7(), iterations=2)
    assert [r.n_elem for r in first.records] == [r.n_elem for r in second.records]
    assert [r.global_value for r in first.records] == [r.global_value for r in second.records]


def test_amr_on_bare_problem():
    result = amr_run(scenario_ex7(), iterations=2)
    records = result.records
    assert len(records) == 3
    assert records[0].n_elem == 96
    assert records[0].marked == 29  # ceil(0.3 · 96)
    assert all(b.n_elem > a.n_elem for a, b in zip(records, records[1:]))
    assert all(b.global_value < a.global_value for a, b in zip(records, records[1:]))
    assert all(r.delta is None for r in records)
    assert result.mesh is result.meshes[-1]
    assert result.primal.mesh is result.mesh


def test_exact_indicator_tracks_the_equality():
    result = amr_run(scenario_ex6(), indicator="exact", iterations=1)
    for record in result.records:
        assert record.delta <= 1e-8
    assert result.records[1].n_elem > 200


def test_exact_indicator_needs_a_solution():
    with pytest.raises(ProblemError):
        amr_run(scenario_ex7(), indicator="exact", iterations=1)


def test_unknown_indicator():
    with pytest.raises(ValueError):
        amr_run(scenario_ex7(), indicator="residual", iterations=1)


def test_separate_dual_mesh():
    result = amr_run(scenario_ex7(), iterations=1, separate_dual=True)
    assert [r.n_elem for r in result.records][0] == 96
    assert result.dual.mesh.n_triangles == 4 * result.mesh.n_triangles
    assert all(np.isfinite(r.global_value) for r in result.records)


def test_compare_indicators_start_together():
    rows, exact, estimated = compare_indicators(scenario_ex6(), iterations=2)
    assert len(rows) == 3
    assert rows[0].n_opt == rows[0].n_maj == 200
    assert rows[0].diff_pct == 0.0
    assert rows[-1].n_opt == exact.records[-1].n_elem
    assert rows[-1].n_maj == estimated.records[-1].n_elem


def test_refinement_comparison():
    result = refinement_comparison(scenario_ex7(), iterations=2, uniform_levels=1)
    assert len(result.adaptive) == 3
    assert [r.n_elem for r in result.uniform] == [96, 384]
    assert result.adaptive[0].global_value == result.uniform[0].global_value


def test_element_limit_ends_the_loop_early():
    result = amr_run(scenario_ex7(), iterations=6, max_elements=150)
    *before, last = result.records
    assert all(r.n_elem < 150 for r in before)
    assert last.n_elem >= 150
    assert last.marked == 0
    assert len(result.meshes) == len(result.records)


def test_refined_meshes_drop_their_ancestors():
    result = amr_run(scenario_ex7(), iterations=2)
    assert all(mesh.parent is None for mesh in result.meshes[1:])
    assert result.mesh.parent is None


@pytest.mark.slow
def test_majorant_driven_meshes_follow_exact_driven_ones():
    rows, exact, estimated = compare_indicators(scenario_ex6(), fraction=0.3, iterations=9)
    assert len(rows) == 10
    assert rows[0].n_opt == 200
    assert max(r.diff_pct for r in rows) <= 5.0
    assert all(r.delta <= 1e-8 for r in estimated.records)


@pytest.mark.slow
@pytest.mark.parametrize(
    "scenario, target, bound",
    [(scenario_ex7, 60000, 0.02), (scenario_ex8, 50000, 0.04)],
    ids=["lshape", "four-regions"],
)
def test_adaptive_majorant_reaches_target(scenario, target, bound):
    result = amr_run(scenario(), iterations=20, max_elements=target)
    records = result.records
    assert all(b.global_value < a.global_value for a, b in zip(records, records[1:]))
    assert records[-1].n_elem >= target
    assert records[-1].normalized < bound

# ─── Tables ─────────────────────────────────────────────────────────────

def test_galerkin_convergence_table():
    rows = convergence_table(rd_poly_2d(), refinements=3)
    assert [r.n_elem for r in rows] == [200, 800, 3200]
    for row in rows:
        assert row.delta <= 1e-9
        assert row.error == pytest.approx(row.majorant, abs=1e-9)
    ratios = [a.majorant / b.majorant for a, b in zip(rows, rows[1:])]
    assert all(1.5 < r < 2.5 for r in ratios)


@pytest.mark.parametrize("approximation", ["undersolve", "averaged"])
def test_other_approximations_keep_the_equality(approximation):
    rows = convergence_table(rd_poly_2d(), refinements=2, approximation=approximation)
    assert all(r.delta <= 1e-9 for r in rows)


def test_analytic_robin_table():
    rows = convergence_table(rd_robin(), refinements=1, approximation="analytic")
    assert rows[0].n_elem == 512
    assert rows[0].delta <= 1e-9 * rows[0].majorant


def test_table_for_bare_problem():
    rows = convergence_table(scenario_ex7(), refinements=1)
    assert rows[0].error is None and rows[0].delta is None
    assert rows[0].majorant > 0.0


def test_table_argument_checks():
    with pytest.raises(ValueError):
        convergence_table(rd_poly_2d(), approximation="lumped")
    with pytest.raises(ValueError):
        convergence_table(rd_poly_2d(), refinements=0)
    with pytest.raises(ProblemError):
        convergence_table(scenario_ex7(), approximation="analytic")


def test_undersolve_is_reaction_diffusion_only():
    with pytest.raises(ProblemError):
        convergence_table(ec_ex4(4), refinements=1, approximation="undersolve")


def test_quadrature_degree_study():
    rows = quadrature_degree_study(rd_poly_2d())
    assert [r.degree for r in rows] == [4, 6, 8, 10]
    for row in rows[1:]:
        assert row.delta <= 1e-10
    # degree 8 already integrates the polynomial integrands exactly
    assert rows[-1].majorant == pytest.approx(rows[2].majorant, rel=1e-12)


def test_eddy_current_quadrature_degree_study():
    rows = quadrature_degree_study(ec_ex4(10))
    assert [r.degree for r in rows] == [4, 6, 8, 10]
    deltas = [r.delta for r in rows]
    assert all(b <= a + 1e-15 for a, b in zip(deltas, deltas[1:]))
    assert deltas[-1] <= 1e-9


@pytest.mark.slow
def test_eddy_current_table_values():
    rows = convergence_table(ec_ex4(20), refinements=4, degree=10)
    assert [r.n_elem for r in rows] == [800, 3200, 12800, 51200]
    expected = [0.1514851, 0.0758770, 0.0379564, 0.0189806]
    for row, value in zip(rows, expected):
        assert row.error == pytest.approx(value, rel=5e-3)
        assert row.delta <= 1e-9
