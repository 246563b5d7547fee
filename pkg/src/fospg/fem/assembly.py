"""Element-local matrices of the hybrid mixed forms, batched over elements.

For every element T the blocks are

* ``Mq[i, j] = (A^{-1} r_j, r_i)_T``          flux mass
* ``G[i, j]  = (r_i, grad v_j)_T``
* ``Fv[i, j] = (v_j, r_i . n)_{dT}``
* ``C[i, m]  = (mu_m, r_i . n)_{dT}``          facet coupling
* ``Mu[i, j] = (v_j, v_i)_T``, ``Kgrad[i, j] = (grad v_j, grad v_i)_T``

so that ``B_h(r, (v, vhat)) = r^T (G - Fv) v + r^T C vhat``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadrature import centroid_rule, element_rule, rule_triangle, tensor_rule_rect, vertex_augmented_triangle
from .spaces import DiffusionTensor, Spaces


@dataclass
class LocalBlocks:
    Mq: np.ndarray
    G: np.ndarray
    Fv: np.ndarray
    C: np.ndarray
    Mu: np.ndarray
    Kgrad: np.ndarray
    D: np.ndarray  # (div r_i, v_j)_T

    @property
    def B(self):
        return self.G - self.Fv


def flux_mass(spaces: Spaces, diffusion: DiffusionTensor, degree=None):
    p = spaces.p
    rule = element_rule(spaces.kind, degree if degree is not None else 2 * p + 2)
    vals, _ = spaces.eval_rt(rule.points)
    x = spaces.map_points(rule.points)
    Ainv = diffusion.inverse(x, spaces.point_regions(len(rule)))
    w = rule.weights[None, :] * spaces.det[:, None]
    return np.einsum("en,enic,encd,enjd->eij", w, vals, Ainv, vals, optimize=True)


def scalar_mass(spaces: Spaces, weight=None):
    rule = element_rule(spaces.kind, 2 * spaces.p)
    val, _ = spaces.eval_scalar(rule.points)
    w = rule.weights[None, :] * spaces.det[:, None]
    if weight is not None:
        w = w * weight
    return np.einsum("en,ni,nj->eij", w, val, val)


def assemble_local(spaces: Spaces, diffusion: DiffusionTensor, mq_degree=None) -> LocalBlocks:
    p = spaces.p
    mesh = spaces.mesh
    Mq = flux_mass(spaces, diffusion, mq_degree)

    rule = element_rule(spaces.kind, 2 * p + 1)
    w = rule.weights[None, :] * spaces.det[:, None]
    sval, sgrad = spaces.eval_scalar(rule.points)
    rval, rdiv = spaces.eval_rt(rule.points)
    G = np.einsum("en,enic,enjc->eij", w, rval, sgrad, optimize=True)
    D = np.einsum("en,eni,nj->eij", w, rdiv, sval, optimize=True)
    Mu = np.einsum("en,ni,nj->eij", w, sval, sval)
    Kgrad = np.einsum("en,enic,enjc->eij", w, sgrad, sgrad, optimize=True)

    line = spaces.facet_line_rule(2)
    xhat, sg = spaces.facet_param(line.points)
    ne, nfe, nl = mesh.num_elements, spaces.nfe, spaces.nl
    Fv = np.zeros((ne, spaces.nq, spaces.nu))
    C = np.zeros((ne, spaces.nq, nfe * nl))
    for f in range(nfe):
        rv, _ = spaces.eval_rt(xhat[f])
        rn = np.einsum("enic,ec->eni", rv, spaces.local_normals[:, f])
        sv, _ = spaces.eval_scalar(xhat[f])
        wl = line.weights[None, :] * spaces.local_facet_lengths[:, f][:, None]
        Fv += np.einsum("en,eni,nj->eij", wl, rn, sv)
        mu = _modes(spaces, sg[:, f])
        C[:, :, f * nl : (f + 1) * nl] = np.einsum("en,eni,enk->eik", wl, rn, mu)
    return LocalBlocks(Mq=Mq, G=G, Fv=Fv, C=C, Mu=Mu, Kgrad=Kgrad, D=D)


def _modes(spaces, s):
    """Legendre facet modes at global facet parameters ``s`` (ne, n) -> (ne, n, nl)."""
    return np.polynomial.legendre.legvander(2 * s - 1, spaces.p)


def load_vector(spaces: Spaces, f, degree=None):
    """``(f, v_j)_T`` for a callable ``f(x, y)``; shape (ne, nu)."""
    rule = element_rule(spaces.kind, degree if degree is not None else 2 * spaces.p + 4)
    x = spaces.map_points(rule.points)
    fx = np.broadcast_to(f(x[..., 0], x[..., 1]), x.shape[:-1])
    val, _ = spaces.eval_scalar(rule.points)
    w = rule.weights[None, :] * spaces.det[:, None]
    return np.einsum("en,en,nj->ej", w, fx, val)


def latent_rule(kind: str, p: int, choice: str = "default"):
    """Quadrature used for the nonlinear term ``(U(psi), w)_h`` and for D_h.

    ``default``: centroid for p = 0, tensor Gauss for rectangles, the
    vertex-including rule for p = 1 triangles, otherwise exact for P_{2p}.
    """
    if choice == "default":
        if p == 0:
            return centroid_rule(kind)
        if kind == "rectangle":
            return tensor_rule_rect(p)
        if p == 1:
            return vertex_augmented_triangle()
        return rule_triangle(2 * p)
    if choice == "vertex":
        if kind != "triangle":
            raise ValueError("vertex rule is defined on triangles only")
        return vertex_augmented_triangle()
    if choice == "gauss":
        return element_rule(kind, 2 * p)
    if choice == "tensor":
        return tensor_rule_rect(p)
    raise ValueError(f"unknown quadrature choice {choice!r}")
