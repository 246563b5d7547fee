"""Projected-gradient solver for the discrete mixed variational inequality at p = 0.

The unknown is one value per cell constrained to a box.  The flux is
eliminated through the liftings, which turns the VI into the minimization of

    J(v) = 1/2 ||A^{-1/2} (L(v) + L_Gamma(g))||^2 - (f, v) - 1/2 ||A^{-1/2} L_Gamma(g)||^2

over the box, with per-cell gradient ``int_T div(L(v) + L_Gamma(g)) - f``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .fem.assembly import assemble_local, load_vector
from .fem.operators import Lifting, l2_project_facet
from .fem.spaces import DiffusionTensor, Spaces
from .latent import Bounds
from .mesh import Mesh

ARMIJO_C = 1e-4
MAX_HALVINGS = 60


class OracleWarning(UserWarning):
    pass


class BoxVI:
    """Discrete mixed VI at p = 0 with per-cell bounds taken at the centroid."""

    def __init__(self, mesh: Mesh, diffusion: DiffusionTensor, f, g, bounds: Bounds):
        self.mesh = mesh
        self.spaces = S = Spaces(mesh, 0)
        self.diffusion = diffusion
        self.bounds = bounds
        self.lower, self.upper = bounds.evaluate(mesh.centroids())
        if np.any(self.lower > self.upper):
            raise ValueError("empty box: lower bound above upper bound")
        self.blocks = assemble_local(S, diffusion)
        self.lift = Lifting(S, diffusion, self.blocks)
        self.F = load_vector(S, f)[:, 0]
        bnd = np.flatnonzero(mesh.facet_elements[:, 1] < 0)
        g_facet = np.zeros((mesh.num_facets, 1))
        g_facet[bnd] = l2_project_facet(S, g, bnd)
        self.qg = self.lift.lift_boundary(g_facet)  # div-conforming coefficients of L_Gamma(g)
        self.div1 = self.blocks.D[:, :, 0]  # int_T div r_i

    @classmethod
    def from_problem(cls, problem, mesh: Mesh):
        return cls(mesh, problem.diffusion, problem.f, problem.g, problem.bounds)

    @property
    def num_cells(self):
        return self.mesh.num_elements

    def project(self, v):
        return np.clip(v, self.lower, self.upper)

    def flux(self, v):
        """Div-conforming coefficients of ``L(v) + L_Gamma(g)``."""
        return self.lift.lift(v[:, None]) + self.qg

    def energy_and_gradient(self, v):
        c = self.flux(v)
        Mc = self.lift.M @ c
        Mg = self.lift.M @ self.qg
        J = 0.5 * float(c @ Mc) - float(self.F @ v) - 0.5 * float(self.qg @ Mg)
        grad = np.einsum("ei,ei->e", self.lift.broken(c), self.div1) - self.F
        return J, grad

    def multipliers(self, q):
        """``int_T (div q - f)`` for broken RT coefficients ``q``."""
        return np.einsum("ei,ei->e", q, self.div1) - self.F


@dataclass
class OracleResult:
    u: np.ndarray  # (ne,)
    q: np.ndarray  # (ne, nq) broken RT coefficients
    iterations: int
    converged: bool
    pg_norm: float
    kkt: float
    energies: list = field(default_factory=list)


def projected_gradient_norm(box: BoxVI, v, grad):
    return float(np.max(np.abs(v - box.project(v - grad)))) if v.size else 0.0


def solve_vi_projected_gradient(box: BoxVI, gtol=1e-10, max_iter=20000, v0=None):
    """Projected gradient with Barzilai-Borwein trial steps and Armijo backtracking.

    Stops when ``max_T |v_T - P(v_T - g_T)| < gtol``.  Returns an
    :class:`OracleResult`; non-convergence is reported by a warning and
    ``converged=False`` together with the final KKT residual.
    """
    v = box.project(np.zeros(box.num_cells) if v0 is None else np.asarray(v0, dtype=float))
    J, grad = box.energy_and_gradient(v)
    energies = [J]
    step = 1.0 / max(np.max(np.abs(grad)), 1e-300)
    pg = projected_gradient_norm(box, v, grad)
    it = 0
    while pg >= gtol and it < max_iter:
        it += 1
        t = step
        for _ in range(MAX_HALVINGS):
            trial = box.project(v - t * grad)
            Jt, gt = box.energy_and_gradient(trial)
            d = trial - v
            # J is quadratic: the exact decrease avoids cancellation between nearby energies
            decrease = float(grad @ d) + 0.5 * float(d @ (gt - grad))
            if decrease <= ARMIJO_C * float(grad @ d):
                break
            t *= 0.5
        s, y = trial - v, gt - grad
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else 2.0 * t
        v, J, grad = trial, Jt, gt
        energies.append(J)
        pg = projected_gradient_norm(box, v, grad)
        if not np.any(s):
            break
    q = box.lift.broken(box.flux(v))
    res = kkt_residual(v, q, box)
    converged = pg < gtol
    if not converged:
        warnings.warn(f"projected gradient stopped at {pg:.2e} (KKT residual {res:.2e})", OracleWarning, stacklevel=2)
    return OracleResult(v, q, it, converged, pg, res, energies)


def kkt_residual(u, q, box: BoxVI):
    """Natural residual of the VI plus the flux-equation defect; zero iff ``(u, q)`` solves it.

    Per cell ``|u_T - P(u_T - m_T)|`` with ``m_T = int_T (div q - f)``, which is
    ``min(u_T - lower, m_T)`` on the lower face, together with the bound
    violation of ``u`` and ``||A^{-1/2}(q - L(u) - L_Gamma(g))||``.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    m = box.multipliers(q)
    natural = np.abs(u - box.project(u - m))
    infeasible = np.maximum(box.lower - u, 0.0) + np.maximum(u - box.upper, 0.0)
    d = q - box.lift.broken(box.flux(u))
    defect = math.sqrt(max(float(np.einsum("ei,eij,ej->", d, box.blocks.Mq, d)), 0.0))
    worst = float(np.max(natural + infeasible)) if u.size else 0.0
    return worst + defect
