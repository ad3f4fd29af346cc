import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from mesh2d import BoundaryKind, Mesh, rect_structured  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def square():
    """Unit square split along the main diagonal into two triangles."""
    return rect_structured(1, 1)


@pytest.fixture
def small_mesh():
    return rect_structured(4, 4)


@pytest.fixture
def single_triangle():
    return Mesh(
        vertices=[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        triangles=[[0, 1, 2]],
        region=[0],
        boundary_edges=[[0, 1], [1, 2], [0, 2]],
        boundary_kind=[BoundaryKind.DIRICHLET] * 3,
        boundary_part=[0, 1, 3],
    )
