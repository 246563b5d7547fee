"""Quadrature rules on [-1, 1], the reference square [0, 1]^2 and the
reference triangle with vertices (0, 0), (1, 0), (0, 1).  All weights are
positive."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)

    def integrate(self, f):
        return float(np.dot(self.weights, f(self.points)))


@lru_cache(maxsize=None)
def gauss_legendre_1d(m: int) -> QuadratureRule:
    """``m``-point Gauss--Legendre rule on [-1, 1] (exact to degree 2m - 1)."""
    if m < 1:
        raise ValueError("need at least one point")
    x, w = np.polynomial.legendre.leggauss(m)
    return QuadratureRule(x[:, None], w, 2 * m - 1)


@lru_cache(maxsize=None)
def gauss_unit_interval(m: int) -> QuadratureRule:
    rule = gauss_legendre_1d(m)
    return QuadratureRule(0.5 * (rule.points[:, 0] + 1.0), 0.5 * rule.weights, rule.degree)


@lru_cache(maxsize=None)
def tensor_rule_rect(p: int) -> QuadratureRule:
    """``(p+1)^2`` Gauss points on [0, 1]^2, exact for Q_{2p+1}."""
    line = gauss_unit_interval(p + 1)
    X, Y = np.meshgrid(line.points, line.points, indexing="xy")
    W = np.outer(line.weights, line.weights)
    return QuadratureRule(np.column_stack([X.ravel(), Y.ravel()]), W.ravel(), 2 * p + 1)


MAX_TRIANGLE_ORDER = 20


@lru_cache(maxsize=None)
def rule_triangle(order: int) -> QuadratureRule:
    """Collapsed (Duffy) Gauss--Jacobi rule exact for P_order on the reference triangle."""
    if order < 0 or order > MAX_TRIANGLE_ORDER:
        raise ValueError(f"unsupported triangle quadrature order {order}")
    if order <= 1:
        return QuadratureRule(np.array([[1 / 3, 1 / 3]]), np.array([0.5]), 1)
    m = (order + 2) // 2
    t, wt = roots_jacobi(m, 1.0, 0.0)  # weight (1 - t) on [-1, 1]
    s, ws = np.polynomial.legendre.leggauss(m)
    xi = 0.5 * (1 + t)
    eta = 0.5 * (1 + s)
    X = np.repeat(xi, m)
    Y = np.outer(1 - xi, eta).ravel()
    W = np.outer(0.25 * wt, 0.5 * ws).ravel()
    return QuadratureRule(np.column_stack([X, Y]), W, 2 * m - 1)


@lru_cache(maxsize=None)
def vertex_augmented_triangle() -> QuadratureRule:
    """Seven-point rule with the three vertices, edge midpoints and centroid.

    Weights (relative to the area) 1/20, 2/15, 9/20; exact to degree 3.
    """
    pts = np.array(
        [[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5], [1 / 3, 1 / 3]], dtype=float
    )
    w = 0.5 * np.array([1 / 20] * 3 + [2 / 15] * 3 + [9 / 20])
    return QuadratureRule(pts, w, 3)


def centroid_rule(kind: str) -> QuadratureRule:
    if kind == "triangle":
        return rule_triangle(1)
    return tensor_rule_rect(0)


def element_rule(kind: str, degree: int) -> QuadratureRule:
    """Rule exact for polynomials of total degree ``degree`` on the reference element."""
    if kind == "triangle":
        return rule_triangle(max(degree, 1))
    return tensor_rule_rect(max(0, degree // 2))
