"""
quadrature.py — Symmetric positive-weight rules on the reference triangle.

Reference triangle (0,0), (1,0), (0,1); weights sum to its area 1/2.
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 10


@dataclass(frozen=True)
class QuadratureRule:
    degree: int
    points: np.ndarray    # (Q, 2) reference coordinates
    weights: np.ndarray   # (Q,)

    @property
    def barycentric(self) -> np.ndarray:
        """(Q, 3) barycentric coordinates (λ0, λ1, λ2)."""
        x, y = self.points[:, 0], self.points[:, 1]
        return np.column_stack([1.0 - x - y, x, y])

    def __len__(self) -> int:
        return len(self.weights)


def _collapsed_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Duffy-collapsed Gauss–Legendre × Gauss–Jacobi(1,0) product rule."""
    k = degree // 2 + 1
    s, ws = np.polynomial.legendre.leggauss(k)
    s = 0.5 * (s + 1.0)
    ws = 0.5 * ws
    t, wt = roots_jacobi(k, 1.0, 0.0)
    v = 0.5 * (t + 1.0)
    wv = 0.25 * wt
    U, V = np.meshgrid(s, v, indexing="ij")
    W = np.outer(ws, wv)
    x = (U * (1.0 - V)).ravel()
    y = V.ravel()
    return np.column_stack([x, y]), W.ravel()


def _symmetrize(points: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Average over the six permutations of barycentric coordinates."""
    bary = np.column_stack([1.0 - points[:, 0] - points[:, 1], points])
    out_points, out_weights = [], []
    for perm in itertools.permutations(range(3)):
        permuted = bary[:, perm]
        out_points.append(permuted[:, 1:])
        out_weights.append(weights / 6.0)
    return np.vstack(out_points), np.concatenate(out_weights)


@lru_cache(maxsize=None)
def quadrature(degree: int) -> QuadratureRule:
    """
    Rule exact for every bivariate polynomial of total degree ≤ degree.

    Args:
        degree: 1..10

    Raises:
        ValueError: for an out-of-range degree
    """
    if not isinstance(degree, (int, np.integer)) or not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"Quadrature degree must be in 1..{MAX_DEGREE}, got {degree}")
    degree = int(degree)
    if degree == 1:
        points = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        weights = np.array([0.5])
    elif degree == 2:
        points = np.array([[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]])
        weights = np.full(3, 1.0 / 6.0)
    else:
        points, weights = _symmetrize(*_collapsed_rule(degree))
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(degree=degree, points=points, weights=weights)


@dataclass(frozen=True)
class EdgeRule:
    points: np.ndarray    # (Q,) parameters in [0, 1]
    weights: np.ndarray   # (Q,) summing to 1


@lru_cache(maxsize=None)
def edge_quadrature(degree: int = 3) -> EdgeRule:
    """Gauss–Legendre on [0, 1]; the default is the 2-point rule."""
    k = max(2, degree // 2 + 1)
    s, w = np.polynomial.legendre.leggauss(k)
    return EdgeRule(points=0.5 * (s + 1.0), weights=0.5 * w)
