"""Reference elements and their polynomial bases.

Scalar spaces use a nodal Lagrange basis (P_p on the triangle, Q_p on the
square).  The Raviart--Thomas basis is dual to the moment degrees of freedom

* facet ``i`` (from local vertex ``i`` to ``i + 1``), mode ``k``:
  ``int_0^1 (r . n_i)(x(s)) L_k(2 s - 1) ds`` with Legendre ``L_k``,
* interior: moments against P_{p-1}^2 (triangle) or
  Q_{p-1,p} x Q_{p,p-1} (square).

The facet moments use the curve parameter (not arc length), so each RT_0
basis function has unit normal trace on its own facet.
"""

from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from .quadrature import element_rule, gauss_unit_interval

TRIANGLE = "triangle"
RECTANGLE = "rectangle"

MAX_DEGREE = {TRIANGLE: 3, RECTANGLE: 2}


class ReferenceElement:
    def __init__(self, kind):
        if kind == TRIANGLE:
            self.vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
            self.measure = 0.5
        elif kind == RECTANGLE:
            self.vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
            self.measure = 1.0
        else:
            raise ValueError(f"unknown element kind {kind!r}")
        self.kind = kind
        self.num_facets = len(self.vertices)
        start = self.vertices
        end = np.roll(self.vertices, -1, axis=0)
        self.facet_start = start
        self.facet_tangent = end - start
        self.facet_lengths = np.linalg.norm(self.facet_tangent, axis=1)
        t = self.facet_tangent
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        self.facet_normals = n / self.facet_lengths[:, None]

    def facet_points(self, s):
        """Points on every facet: ``(num_facets, len(s), 2)``."""
        s = np.asarray(s, dtype=float)
        return self.facet_start[:, None, :] + s[None, :, None] * self.facet_tangent[:, None, :]


@lru_cache(maxsize=None)
def reference_element(kind) -> ReferenceElement:
    return ReferenceElement(kind)


def check_degree(kind, p):
    if not 0 <= p <= MAX_DEGREE[kind]:
        raise ValueError(f"degree p={p} not supported on {kind}s (max {MAX_DEGREE[kind]})")


# -- monomials --------------------------------------------------------------


def monomial_exponents(kind, p):
    if kind == TRIANGLE:
        return [(a, d - a) for d in range(p + 1) for a in range(d, -1, -1)]
    return [(a, b) for b in range(p + 1) for a in range(p + 1)]


def eval_monomials(exps, x):
    """Values and gradients of ``x^a y^b``: shapes (n, m) and (n, m, 2)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    a = np.array([e[0] for e in exps])
    b = np.array([e[1] for e in exps])
    X, Y = x[:, :1], x[:, 1:2]

    def pw(base, k):
        out = np.ones(base.shape[:1] + k.shape)
        mask = k > 0
        out[:, mask] = base ** k[mask]
        return out

    xa, yb = pw(X, a), pw(Y, b)
    xa1, yb1 = pw(X, np.maximum(a - 1, 0)), pw(Y, np.maximum(b - 1, 0))
    val = xa * yb
    grad = np.stack([a * xa1 * yb, b * xa * yb1], axis=-1)
    return val, grad


_CENTER = {TRIANGLE: (np.array([1 / 3, 1 / 3]), 3.0), RECTANGLE: (np.array([0.5, 0.5]), 2.0)}


def centered_monomials(kind, exps, x):
    """Monomials in ``sigma (x - c)`` about the element center; better conditioned bases."""
    c, sigma = _CENTER[kind]
    val, grad = eval_monomials(exps, sigma * (np.atleast_2d(np.asarray(x, dtype=float)) - c))
    return val, sigma * grad


def legendre_on_unit(k_max, s):
    """``L_k(2 s - 1)`` for k = 0..k_max: shape (len(s), k_max + 1)."""
    t = 2 * np.asarray(s, dtype=float) - 1
    return legendre.legvander(t, k_max)


# -- scalar Lagrange basis ----------------------------------------------------


class ScalarBasis:
    """Nodal Lagrange basis of P_p (triangle) or Q_p (square)."""

    def __init__(self, kind, p):
        check_degree(kind, p)
        self.kind, self.p = kind, p
        self.exps = monomial_exponents(kind, p)
        self.nodes = lagrange_nodes(kind, p)
        V, _ = centered_monomials(kind, self.exps, self.nodes)
        self.vandermonde = V
        self.coeffs = np.linalg.inv(V)  # columns: basis functions in monomial coefficients
        self.dim = len(self.exps)

    def eval(self, x):
        """Values (n, dim) and reference gradients (n, dim, 2)."""
        val, grad = centered_monomials(self.kind, self.exps, x)
        return val @ self.coeffs, np.einsum("nmd,mi->nid", grad, self.coeffs)


def lagrange_nodes(kind, p):
    if p == 0:
        return np.array([[1 / 3, 1 / 3]]) if kind == TRIANGLE else np.array([[0.5, 0.5]])
    if kind == TRIANGLE:
        return np.array([[a / p, b / p] for (a, b) in monomial_exponents(kind, p)])
    return np.array([[a / p, b / p] for (a, b) in monomial_exponents(kind, p)])


@lru_cache(maxsize=None)
def scalar_basis(kind, p) -> ScalarBasis:
    return ScalarBasis(kind, p)


# -- Raviart--Thomas basis --------------------------------------------------------


class RTBasis:
    """Raviart--Thomas RT_p basis on the reference element."""

    def __init__(self, kind, p):
        check_degree(kind, p)
        self.kind, self.p = kind, p
        ref = reference_element(kind)
        if kind == TRIANGLE:
            self.exps = monomial_exponents(TRIANGLE, p + 1)
            span = self._triangle_span(p)
        else:
            self.exps = [(a, b) for b in range(p + 2) for a in range(p + 2)]
            span = self._square_span(p)
        # span: (nspan, 2, nmono) coefficient arrays
        dofs = self._dof_matrix(span, ref)
        coeffs = np.linalg.solve(dofs, np.eye(len(dofs)))
        # basis_i = sum_j span_j coeffs[j, i]
        self.coeffs = np.einsum("jcm,ji->icm", span, coeffs)
        self.dim = len(dofs)
        self.num_facet_dofs = ref.num_facets * (p + 1)
        self.dof_condition = np.linalg.cond(dofs)

    def _index(self):
        return {e: i for i, e in enumerate(self.exps)}

    def _triangle_span(self, p):
        idx = self._index()
        m = len(self.exps)
        span = []
        for e in monomial_exponents(TRIANGLE, p):
            for c in range(2):
                f = np.zeros((2, m))
                f[c, idx[e]] = 1.0
                span.append(f)
        for a in range(p, -1, -1):
            b = p - a
            f = np.zeros((2, m))
            f[0, idx[(a + 1, b)]] = 1.0
            f[1, idx[(a, b + 1)]] = 1.0
            span.append(f)
        return np.array(span)

    def _square_span(self, p):
        idx = self._index()
        m = len(self.exps)
        span = []
        for b in range(p + 1):
            for a in range(p + 2):
                f = np.zeros((2, m))
                f[0, idx[(a, b)]] = 1.0
                span.append(f)
        for b in range(p + 2):
            for a in range(p + 1):
                f = np.zeros((2, m))
                f[1, idx[(a, b)]] = 1.0
                span.append(f)
        return np.array(span)

    def _interior_moments(self):
        p = self.p
        if p == 0:
            return []
        if self.kind == TRIANGLE:
            tests = monomial_exponents(TRIANGLE, p - 1)
            return [(c, e) for c in range(2) for e in tests]
        xs = [(a, b) for b in range(p + 1) for a in range(p)]
        ys = [(a, b) for b in range(p) for a in range(p + 1)]
        return [(0, e) for e in xs] + [(1, e) for e in ys]

    def _dof_matrix(self, span, ref):
        p = self.p
        line = gauss_unit_interval(p + 3)
        L = legendre_on_unit(p, line.points)  # (nq, p+1)
        rows = []
        pts = ref.facet_points(line.points)
        for i in range(ref.num_facets):
            val, _ = centered_monomials(self.kind, self.exps, pts[i])  # (nq, m)
            normal_trace = np.einsum("jcm,nm,c->jn", span, val, ref.facet_normals[i])
            for k in range(p + 1):
                rows.append(normal_trace @ (line.weights * L[:, k]))
        rule = element_rule(self.kind, 2 * p + 2)
        val, _ = centered_monomials(self.kind, self.exps, rule.points)
        comp = np.einsum("jcm,nm->jcn", span, val)
        for c, e in self._interior_moments():
            test, _ = centered_monomials(self.kind, [e], rule.points)
            rows.append(comp[:, c, :] @ (rule.weights * test[:, 0]))
        return np.array(rows)

    def eval(self, x):
        """Reference values (n, dim, 2) and divergences (n, dim)."""
        val, grad = centered_monomials(self.kind, self.exps, x)
        values = np.einsum("icm,nm->nic", self.coeffs, val)
        div = np.einsum("im,nm->ni", self.coeffs[:, 0, :], grad[:, :, 0]) + np.einsum(
            "im,nm->ni", self.coeffs[:, 1, :], grad[:, :, 1]
        )
        return values, div


@lru_cache(maxsize=None)
def rt_basis(kind, p) -> RTBasis:
    return RTBasis(kind, p)


def facet_dof_slices(kind, p):
    """Indices of the RT facet dofs of local facet i: ``range(i (p+1), (i+1)(p+1))``."""
    nf = reference_element(kind).num_facets
    return [np.arange(i * (p + 1), (i + 1) * (p + 1)) for i in range(nf)]
