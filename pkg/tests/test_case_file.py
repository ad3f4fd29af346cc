import os

import numpy as np
import pytest

from fem_spaces import SpaceKind
from mesh2d import BoundaryKind, Side
from problems import (
    CaseFileError,
    Ec2dProblem,
    ProblemError,
    RdProblem,
    load_case_card,
    parse_case_card,
    solve_pair,
)

TEMPLATE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "templates", "case_template.md")

EC_CARD = """\
---
kind: ec
name: lshape-current
domain: {shape: lshape, n: 4}
coefficients:
  0: {eps: 1.0, mu: 100.0}
source:
  0: [1.0, 0.0]
---

## Problem

Constant current on a small L-shape.
"""


def _card(body: str) -> str:
    return f"---\n{body}---\n"


def test_template_parses():
    card = load_case_card(TEMPLATE)
    assert card.name == "my-case"
    assert card.kind == "rd"
    assert isinstance(card.problem, RdProblem)
    mesh = card.problem.initial_mesh()
    assert mesh.n_triangles == 128
    assert set(np.unique(mesh.region)) == {0, 1}
    assert np.array_equal(mesh.region, (mesh.centroids[:, 0] > 0.5).astype(int))
    assert "One line describing the problem" in card.description


def test_template_boundary_and_coefficients():
    problem = load_case_card(TEMPLATE).problem
    mesh = problem.initial_mesh()
    right = mesh.boundary_part == Side.RIGHT
    assert np.all(mesh.boundary_kind[right] == BoundaryKind.NEUMANN)
    assert np.all(mesh.boundary_kind[~right] == BoundaryKind.DIRICHLET)
    assert np.allclose(problem.alpha.at(np.array([1])), [np.diag([2.0, 1.0])])
    assert problem.rho.at(np.array([0, 1])).tolist() == [1.0, 10.0]
    x = np.zeros((1, 2, 2))
    assert problem.f(x, np.array([[0, 1]])).tolist() == [[1.0, 0.0]]


def test_template_problem_is_solvable():
    problem = load_case_card(TEMPLATE).problem
    u_h, p_h = solve_pair(problem, problem.initial_mesh())
    assert u_h.space.kind is SpaceKind.P1
    assert np.abs(u_h.coefficients).max() > 0.0


def test_eddy_current_card():
    card = parse_case_card(EC_CARD)
    assert isinstance(card.problem, Ec2dProblem)
    assert card.description == "Constant current on a small L-shape."
    mesh = card.problem.initial_mesh()
    assert mesh.n_triangles == 24
    E_h, _ = solve_pair(card.problem, mesh)
    assert np.abs(E_h.coefficients).max() > 0.0


def test_body_sections_by_heading():
    body = (
        "Preamble is ignored.\n\n"
        "## Problem\n\nFirst part.\n\n"
        "### Detail\n\nStays with the problem text.\n\n"
        "## Mesh notes\n\nNot a card section.\n\n"
        "## Remarks\n\nCoarse start.\n\n"
        "## Description\n\nSecond part.\n"
    )
    card = parse_case_card(_card("kind: rd\n") + "\n" + body)
    assert card.description == "First part.\n\n### Detail\n\nStays with the problem text.\n\nSecond part."
    assert card.notes == "Coarse start."


def test_body_without_sections():
    card = parse_case_card(_card("kind: rd\n") + "\nJust prose.\n")
    assert card.description == "" and card.notes == ""


def test_name_falls_back_to_file_stem(tmp_path):
    path = tmp_path / "plain.md"
    path.write_text(_card("kind: rd\n"))
    assert load_case_card(path).name == "plain"


@pytest.mark.parametrize(
    "body, message",
    [
        ("kind: rd\nmesh: fine\n", "Unknown case card key"),
        ("kind: maxwell\n", "kind"),
        ("boundary: {left: robin}\n", "dirichlet or neumann"),
        ("boundary: {inside: neumann}\n", "side"),
        ("domain: {shape: disk}\n", "shape"),
        ("regions:\n  - {label: 1, x1: [0.5, 0.2]}\n", "empty"),
        ("kind: ec\nsource: {0: 1.0}\n", "2-vector"),
        ("coefficients: {0: {alpha: -1.0}}\n", "coefficients"),
    ],
)
def test_malformed_cards(body, message):
    with pytest.raises(CaseFileError, match=message):
        parse_case_card(_card(body))


def test_card_without_frontmatter():
    with pytest.raises(CaseFileError, match="no frontmatter"):
        parse_case_card("## Description\n\nJust prose.\n")


def test_missing_card_file(tmp_path):
    with pytest.raises(CaseFileError):
        load_case_card(tmp_path / "absent.md")


def test_case_file_errors_are_problem_errors():
    assert issubclass(CaseFileError, ProblemError)
