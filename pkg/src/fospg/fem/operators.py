"""Projections, liftings and norms on top of the local blocks."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..linalg import SPDFactor
from .assembly import LocalBlocks, _modes, assemble_local
from .quadrature import element_rule, gauss_unit_interval
from .spaces import DiffusionTensor, Spaces


# -- L2 projections ---------------------------------------------------------------


def l2_project_element(spaces: Spaces, f, degree=None):
    """Coefficients (ne, nu) of the broken L2 projection of ``f(x, y)``."""
    rule = element_rule(spaces.kind, degree if degree is not None else 2 * spaces.p + 4)
    x = spaces.map_points(rule.points)
    fx = np.broadcast_to(f(x[..., 0], x[..., 1]), x.shape[:-1])
    return project_values(spaces, fx, rule)


def project_values(spaces: Spaces, values, rule):
    """L2 projection of data sampled at ``rule`` points: values (ne, n)."""
    val, _ = spaces.eval_scalar(rule.points)
    w = rule.weights[None, :] * spaces.det[:, None]
    rhs = np.einsum("en,en,nj->ej", w, values, val)
    M = np.einsum("n,ni,nj->ij", rule.weights, val, val)  # reference mass; det cancels
    return np.linalg.solve(M, (rhs / spaces.det[:, None]).T).T


def l2_project_facet(spaces: Spaces, g, facets=None):
    """Legendre coefficients (len(facets), p + 1) of the facet L2 projection of ``g``.

    Coefficients refer to ``L_k(2 s - 1)`` in the global facet parameter ``s``
    running from ``facets[f, 0]`` to ``facets[f, 1]``.
    """
    mesh = spaces.mesh
    facets = np.arange(mesh.num_facets) if facets is None else np.asarray(facets)
    line = gauss_unit_interval(spaces.p + 4)
    a = mesh.vertices[mesh.facets[facets, 0]]
    b = mesh.vertices[mesh.facets[facets, 1]]
    x = a[:, None, :] + line.points[None, :, None] * (b - a)[:, None, :]
    gx = np.broadcast_to(g(x[..., 0], x[..., 1]), x.shape[:-1])
    L = np.polynomial.legendre.legvander(2 * line.points - 1, spaces.p)
    k = np.arange(spaces.p + 1)
    return (2 * k + 1) * np.einsum("n,fn,nk->fk", line.weights, gx, L)


def facet_polynomial(coeffs, s):
    """Evaluate facet Legendre coefficients (nf, p+1) at parameters ``s``."""
    p = coeffs.shape[-1] - 1
    return coeffs @ np.polynomial.legendre.legvander(2 * np.asarray(s) - 1, p).T


# -- div-conforming assembly and liftings -----------------------------------------


def scatter_div(spaces: Spaces, local):
    """Assemble local RT matrices (ne, nq, nq) into the div-conforming space."""
    s = spaces.div_sign
    vals = local * s[:, :, None] * s[:, None, :]
    rows = np.repeat(spaces.div_dofs[:, :, None], spaces.nq, axis=2)
    cols = np.repeat(spaces.div_dofs[:, None, :], spaces.nq, axis=1)
    n = spaces.num_div_dofs
    return sp.csc_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n))


def gather_div(spaces: Spaces, local_vec):
    """Assemble local RT vectors (ne, nq) into the div-conforming space."""
    return np.bincount(
        spaces.div_dofs.ravel(), (local_vec * spaces.div_sign).ravel(), minlength=spaces.num_div_dofs
    )


class Lifting:
    """The lifting operators ``L`` and ``L_Gamma`` with a cached factorization.

    ``(A^{-1} L(u), r) = (u, div r)`` and
    ``(A^{-1} L_Gamma(g), r) = -<g, r.n>_{boundary}`` for all div-conforming ``r``.
    """

    def __init__(self, spaces: Spaces, diffusion: DiffusionTensor, blocks: LocalBlocks = None):
        self.spaces = spaces
        self.blocks = blocks if blocks is not None else assemble_local(spaces, diffusion)
        self.M = scatter_div(spaces, self.blocks.Mq)
        self.factor = SPDFactor(self.M)

    def rhs_interior(self, u):
        return gather_div(self.spaces, np.einsum("eij,ej->ei", self.blocks.D, u))

    def rhs_boundary(self, g_facet):
        """``g_facet``: facet Legendre coefficients (nf, p+1); only boundary rows are used."""
        sp_ = self.spaces
        mesh = sp_.mesh
        nl = sp_.nl
        local = np.zeros((mesh.num_elements, sp_.nq))
        bnd = mesh.facet_elements[:, 1] < 0
        for f in range(sp_.nfe):
            gf = mesh.element_facets[:, f]
            on = bnd[gf]
            if not np.any(on):
                continue
            C = self.blocks.C[on][:, :, f * nl : (f + 1) * nl]
            local[on] -= np.einsum("eik,ek->ei", C, g_facet[gf[on]])
        return gather_div(sp_, local)

    def lift(self, u):
        """Div-conforming coefficients of ``L(u)``."""
        return self.factor.solve(self.rhs_interior(u))

    def lift_boundary(self, g_facet):
        return self.factor.solve(self.rhs_boundary(g_facet))

    def broken(self, coeffs_div):
        return self.spaces.broken_from_div(coeffs_div)


def lifting(spaces: Spaces, diffusion: DiffusionTensor, u):
    """Broken RT coefficients (ne, nq) of ``L(u)``."""
    lift = Lifting(spaces, diffusion)
    return lift.broken(lift.lift(u))


def lifting_boundary(spaces: Spaces, diffusion: DiffusionTensor, g):
    """Broken RT coefficients of ``L_Gamma(g)`` for a callable ``g(x, y)``."""
    lift = Lifting(spaces, diffusion)
    return lift.broken(lift.lift_boundary(l2_project_facet(spaces, g)))


# -- norms ---------------------------------------------------------------------------


def flux_energy(spaces: Spaces, Mq, q):
    """``||A^{-1/2} q||^2`` from local flux masses."""
    return float(np.einsum("ei,eij,ej->", q, Mq, q))


def _trace_values(spaces: Spaces, u, line):
    """Traces of broken scalar fields on each local facet: (ne, nfe, n)."""
    xhat, _ = spaces.facet_param(line.points)
    val = spaces.scalar.eval(xhat.reshape(-1, 2))[0].reshape(spaces.nfe, len(line), spaces.nu)
    return np.einsum("fnj,ej->efn", val, u)


def _grad_energy(spaces: Spaces, diffusion: DiffusionTensor, u):
    rule = element_rule(spaces.kind, 2 * spaces.p + 2)
    _, grad = spaces.eval_scalar(rule.points)
    gu = np.einsum("enik,ei->enk", grad, u)
    x = spaces.map_points(rule.points)
    A = diffusion(x, spaces.point_regions(len(rule)))
    w = rule.weights[None, :] * spaces.det[:, None]
    return float(np.einsum("en,enc,encd,end->", w, gu, A, gu))


def dg_norm(spaces: Spaces, u, diffusion: DiffusionTensor = None):
    """``||u||_DG`` with boundary facets included in the jump term."""
    diffusion = diffusion or DiffusionTensor.identity()
    mesh = spaces.mesh
    line = gauss_unit_interval(spaces.p + 2)
    tr = _trace_values(spaces, u, line)
    # owner trace minus neighbor trace, the latter reversed to the owner's parameter
    jump = tr[mesh.facet_elements[:, 0], mesh.facet_local[:, 0]].copy()
    inner = mesh.facet_elements[:, 1] >= 0
    jump[inner] -= tr[mesh.facet_elements[inner, 1], mesh.facet_local[inner, 1]][:, ::-1]
    # h_E^{-1} ||[u]||^2_E = int_0^1 [u]^2 ds since h_E = |E|
    total = _grad_energy(spaces, diffusion, u) + float(np.einsum("n,fn->", line.weights, jump**2))
    return np.sqrt(max(total, 0.0))


def triple_norm(spaces: Spaces, Mq, q, u, uhat_facet, diffusion: DiffusionTensor = None):
    """Energy norm of ``(q, u, uhat)``; ``uhat_facet`` are facet Legendre coefficients (nf, p+1)."""
    diffusion = diffusion or DiffusionTensor.identity()
    line = gauss_unit_interval(spaces.p + 2)
    tr = _trace_values(spaces, u, line)
    _, sg = spaces.facet_param(line.points)
    uh = np.einsum("efk,efnk->efn", uhat_facet[spaces.mesh.element_facets], _modes(spaces, sg))
    diff2 = np.einsum("n,efn->ef", line.weights, (tr - uh) ** 2) * spaces.local_facet_lengths
    total = flux_energy(spaces, Mq, q) + _grad_energy(spaces, diffusion, u)
    total += float(np.sum(diff2 / spaces.h[:, None]))
    return np.sqrt(max(total, 0.0))
