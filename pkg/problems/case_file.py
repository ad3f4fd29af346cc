"""
problems/case_file.py — Parse problem case cards (YAML frontmatter + markdown) into problems.
"""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import frontmatter
import numpy as np

from fem_spaces import PiecewiseConstant
from mesh2d import BoundaryKind, Side, lshape_structured, rect_structured, side_of
from problems.base import Ec2dProblem, ProblemError, RdProblem

logger = logging.getLogger(__name__)

KNOWN_KEYS = {"kind", "name", "domain", "regions", "coefficients", "source", "boundary"}
SIDES = {"bottom": Side.BOTTOM, "right": Side.RIGHT, "top": Side.TOP, "left": Side.LEFT}
BOUNDARY_KINDS = {"dirichlet": BoundaryKind.DIRICHLET, "neumann": BoundaryKind.NEUMANN}
COEFFICIENT_KEYS = {"rd": ("alpha", "rho"), "ec": ("eps", "mu")}


class CaseFileError(ProblemError):
    """A case card that cannot be turned into a problem."""


@dataclass
class CaseCard:
    """A parsed case card."""
    name: str
    kind: str
    problem: Union[RdProblem, Ec2dProblem]
    description: str = ""
    notes: str = ""
    metadata: dict = field(default_factory=dict, repr=False)


def parse_case_card(text: str, name: str = "case") -> CaseCard:
    """
    Parse a case card.

    Args:
        text: markdown with YAML frontmatter
        name: fallback problem name when the card has none

    Returns:
        CaseCard holding a ready-to-solve problem with its initial mesh factory

    Raises:
        CaseFileError: on unknown keys or malformed values
    """
    try:
        post = frontmatter.loads(text)
    except Exception as e:
        raise CaseFileError(f"Case card frontmatter is not valid YAML: {e}") from e
    metadata = post.metadata or {}
    if not metadata:
        raise CaseFileError("Case card has no frontmatter")
    unknown = set(metadata) - KNOWN_KEYS
    if unknown:
        raise CaseFileError(f"Unknown case card key(s): {', '.join(sorted(unknown))}")

    kind = str(metadata.get("kind", "rd")).lower()
    if kind not in COEFFICIENT_KEYS:
        raise CaseFileError(f"Case kind must be 'rd' or 'ec', got '{kind}'")
    name = str(metadata.get("name", name))

    boxes = _parse_regions(metadata.get("regions", []))
    labels = sorted({0} | {label for label, _, _ in boxes})
    region_fn = _region_fn(boxes)
    boundary_fn = _boundary_fn(metadata.get("boundary", {}) or {})
    mesh_factory = _mesh_factory(metadata.get("domain", {}) or {}, region_fn, boundary_fn)

    first, second = _parse_coefficients(kind, metadata.get("coefficients", {}) or {}, labels)
    source = _parse_source(kind, metadata.get("source", {}) or {}, labels)

    if kind == "rd":
        problem = RdProblem(alpha=first, rho=second, f=source, name=name, mesh_factory=mesh_factory)
    else:
        problem = Ec2dProblem(eps=first, mu=second, J=source, name=name, mesh_factory=mesh_factory)

    description, notes = _parse_body_sections(post.content)
    logger.debug(f"Parsed case card '{name}' ({kind}, regions {labels})")
    return CaseCard(name=name, kind=kind, problem=problem, description=description, notes=notes, metadata=metadata)


def load_case_card(path) -> CaseCard:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise CaseFileError(f"Cannot read case card {path}: {e}") from e
    return parse_case_card(text, name=path.stem)


# ─── Frontmatter sections ───────────────────────────────────────────────

def _interval(value, what: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise CaseFileError(f"{what} must be a pair [lo, hi], got {value!r}") from None
    if not lo < hi:
        raise CaseFileError(f"{what} is empty: [{lo}, {hi}]")
    return lo, hi


def _parse_regions(regions) -> list:
    if not isinstance(regions, list):
        raise CaseFileError("'regions' must be a list of boxes")
    boxes = []
    for i, box in enumerate(regions):
        if not isinstance(box, dict) or "label" not in box:
            raise CaseFileError(f"Region {i} needs a label and x1/x2 intervals")
        label = int(box["label"])
        boxes.append((label, _interval(box.get("x1", [0, 1]), f"region {i} x1"), _interval(box.get("x2", [0, 1]), f"region {i} x2")))
    return boxes


def _region_fn(boxes: list):
    def region_fn(centroids):
        labels = np.zeros(len(centroids), dtype=np.int64)
        assigned = np.zeros(len(centroids), dtype=bool)
        x1, x2 = centroids[:, 0], centroids[:, 1]
        # first box wins
        for label, (a, b), (c, d) in boxes:
            inside = ~assigned & (x1 >= a) & (x1 <= b) & (x2 >= c) & (x2 <= d)
            labels[inside] = label
            assigned |= inside
        return labels
    return region_fn


def _boundary_fn(boundary: dict):
    kinds = {}
    for side, kind in boundary.items():
        if str(side).lower() not in SIDES:
            raise CaseFileError(f"Unknown boundary side '{side}'")
        if str(kind).lower() not in BOUNDARY_KINDS:
            raise CaseFileError(f"Boundary kind for '{side}' must be dirichlet or neumann, got '{kind}'")
        kinds[SIDES[str(side).lower()]] = BOUNDARY_KINDS[str(kind).lower()]

    def boundary_fn(midpoints):
        side = side_of(midpoints)
        out = np.full(len(midpoints), int(BoundaryKind.DIRICHLET), dtype=np.int64)
        for s, kind in kinds.items():
            out[side == s] = kind
        return out
    return boundary_fn


def _mesh_factory(domain: dict, region_fn, boundary_fn):
    shape = str(domain.get("shape", "rect")).lower()
    diagonal = str(domain.get("diagonal", "main")).lower()
    if shape == "rect":
        nx, ny = int(domain.get("nx", 8)), int(domain.get("ny", domain.get("nx", 8)))
        return lambda: rect_structured(nx, ny, diagonal=diagonal, region_fn=region_fn, boundary_fn=boundary_fn)
    if shape == "lshape":
        n = int(domain.get("n", 8))
        return lambda: lshape_structured(n, diagonal=diagonal, region_fn=region_fn, boundary_fn=boundary_fn)
    raise CaseFileError(f"Unknown domain shape '{shape}' (rect or lshape)")


def _parse_coefficients(kind: str, coefficients: dict, labels: list):
    tensor_key, scalar_key = COEFFICIENT_KEYS[kind]
    tensors, scalars = {}, {}
    for label in labels:
        entry = coefficients.get(label, coefficients.get(str(label), {})) or {}
        tensors[label] = entry.get(tensor_key, 1.0)
        scalars[label] = entry.get(scalar_key, 1.0)
    try:
        return PiecewiseConstant.matrix(tensors), PiecewiseConstant.scalar(scalars)
    except Exception as e:
        raise CaseFileError(f"Invalid coefficients: {e}") from e


def _parse_source(kind: str, source: dict, labels: list):
    width = () if kind == "rd" else (2,)
    values = {}
    for label in labels:
        raw = source.get(label, source.get(str(label), 0.0 if kind == "rd" else [0.0, 0.0]))
        v = np.asarray(raw, dtype=float)
        if v.shape != width or not np.all(np.isfinite(v)):
            raise CaseFileError(f"Source for region {label} must be {'a scalar' if kind == 'rd' else 'a 2-vector'}, got {raw!r}")
        values[label] = v

    def source_fn(x, region):
        region = np.asarray(region)
        out = np.zeros(region.shape + width)
        for label, v in values.items():
            out[region == label] = v
        return out
    return source_fn


# ─── Body ───────────────────────────────────────────────────────────────

BODY_HEADINGS = {"description": "description", "problem": "description", "notes": "notes", "remarks": "notes"}
_HEADING = re.compile(r"^##[ \t]+(.+?)[ \t]*$", re.MULTILINE)


def _parse_body_sections(content: str) -> tuple[str, str]:
    """
    Description and notes prose of a card body, keyed by its level-two headings.

    Repeated sections are joined with a blank line; unknown headings are skipped.
    """
    parts = _HEADING.split(content)
    found: dict[str, list[str]] = {"description": [], "notes": []}
    for heading, body in zip(parts[1::2], parts[2::2]):
        target = BODY_HEADINGS.get(heading.lower())
        if target is None:
            logger.debug(f"Skipping case card section '{heading}'")
        elif body.strip():
            found[target].append(body.strip())
    return "\n\n".join(found["description"]), "\n\n".join(found["notes"])
