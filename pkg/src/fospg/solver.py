"""Hybridized proximal Galerkin solver and the baseline hybrid mixed solver.

Unknowns per element are the broken flux ``q`` (RT_p), the primal ``u`` and
the latent ``psi`` (both P_p or Q_p); the facet multiplier ``uhat`` lives on
facets with Dirichlet facets fixed to the projection of ``g``.  Each
proximal step solves, for all test functions,

    -alpha B_h(q, (v, vhat)) + (psi, v) = alpha (f, v) + (psi_old, v)
    (A^{-1} q, r) + B_h(r, (u, uhat)) = 0
    (u, w) - (U(psi), w)_h - (S psi, w) = 0

with Newton's method.  In matrix form on one element ``B_h(r, (v, vhat)) =
-r.D v + r.C vhat`` where ``D[i, j] = (div r_i, v_j)``.  Each element's
primal and latent unknowns are eliminated in the generalized eigenbasis of
the linearized latent block (see :func:`condense`), leaving a symmetric
positive definite system in the interior facet unknowns.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .fem import assemble_local, l2_project_facet, latent_rule, load_vector
from .fem.quadrature import gauss_unit_interval
from .fem.spaces import Spaces
from .latent import BoundsError, LatentOperator
from .linalg import AssemblyError, SPDFactor, spd_solve, symmetry_defect

log = logging.getLogger(__name__)

ALPHA_CAP = 1e30


class SolverError(RuntimeError):
    """Numerical failure inside a solve (NaN, non-SPD system)."""


class ConfigError(ValueError):
    """Invalid solver or run configuration."""


class NewtonWarning(UserWarning):
    pass


# -- configuration -----------------------------------------------------------------


@dataclass(frozen=True)
class AlphaSchedule:
    """Step sizes ``alpha_k = c`` or ``alpha_k = a0 r^k`` for k = 1, 2, ...; capped at 1e30."""

    kind: str = "geom"
    a0: float = 1.0
    ratio: float = 4.0

    def __post_init__(self):
        if self.kind not in ("const", "geom"):
            raise ConfigError(f"unknown alpha schedule {self.kind!r}")
        if not (self.a0 > 0 and math.isfinite(self.a0)):
            raise ConfigError("alpha values must be positive")
        if self.kind == "geom" and not self.ratio > 0:
            raise ConfigError("geometric ratio must be positive")

    def __call__(self, k: int) -> float:
        if self.kind == "const":
            return min(self.a0, ALPHA_CAP)
        with np.errstate(over="ignore"):
            return float(min(self.a0 * np.float64(self.ratio) ** k, ALPHA_CAP))

    @classmethod
    def constant(cls, c):
        return cls("const", float(c), 1.0)

    @classmethod
    def geometric(cls, a0, ratio):
        return cls("geom", float(a0), float(ratio))

    @classmethod
    def parse(cls, text: str) -> "AlphaSchedule":
        """``const:c`` or ``geom:a0,r``."""
        try:
            kind, _, args = text.partition(":")
            if kind == "const":
                return cls.constant(float(args))
            if kind == "geom":
                a0, r = args.split(",")
                return cls.geometric(float(a0), float(r))
        except ValueError as exc:
            raise ConfigError(f"bad alpha schedule {text!r}: {exc}") from exc
        raise ConfigError(f"bad alpha schedule {text!r}; expected const:c or geom:a0,r")

    def describe(self):
        return f"const:{self.a0:g}" if self.kind == "const" else f"geom:{self.a0:g},{self.ratio:g}"


NEWTON_MODES = ("single", "fixed", "adaptive")


@dataclass
class FospgConfig:
    p: int = 1
    operator: Optional[str] = None  # None: the problem's default
    alpha: AlphaSchedule = field(default_factory=AlphaSchedule)
    tol: float = 1e-8
    max_iter: int = 300
    newton: str = "fixed"
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    eps1: float = 0.0
    eps2: float = 0.0
    quadrature: str = "default"
    predictor: bool = True  # start Newton from psi_old + alpha * previous multiplier

    def validate(self):
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.newton not in NEWTON_MODES:
            raise ConfigError(f"newton mode must be one of {NEWTON_MODES}")
        if self.newton == "fixed" and not self.newton_tol > 0:
            raise ConfigError("newton tolerance must be positive")
        if self.eps1 < 0 or self.eps2 < 0:
            raise ConfigError("stabilization parameters must be nonnegative")
        if self.max_iter < 1 or self.newton_max_iter < 1:
            raise ConfigError("iteration limits must be positive")
        return self

    @staticmethod
    def parse_newton(text: str):
        """``single`` | ``fixed:t`` | ``adaptive`` -> (mode, tol)."""
        mode, _, arg = text.partition(":")
        if mode == "single" or mode == "adaptive":
            return mode, 0.1
        if mode == "fixed":
            try:
                t = float(arg) if arg else 1e-10
            except ValueError as exc:
                raise ConfigError(f"bad newton tolerance {arg!r}") from exc
            return mode, t
        raise ConfigError(f"bad newton mode {text!r}; expected single, fixed:t or adaptive")


@dataclass
class ProximalState:
    q: np.ndarray  # (ne, nq) broken RT coefficients
    u: np.ndarray  # (ne, nu)
    uhat: np.ndarray  # (nf, p+1) facet Legendre coefficients
    psi: np.ndarray  # (ne, nu)
    k: int = 0
    alpha_sum: float = 0.0

    def copy(self):
        return ProximalState(self.q.copy(), self.u.copy(), self.uhat.copy(), self.psi.copy(), self.k, self.alpha_sum)


@dataclass
class RunReport:
    steps: list = field(default_factory=list)
    converged: bool = False
    newton_failures: int = 0
    average_property: bool = True  # cell averages of u stay strictly inside the bounds
    config: dict = field(default_factory=dict)

    @property
    def total_iterations(self):
        return len(self.steps)

    @property
    def total_newton(self):
        return int(sum(s["newton_iterations"] for s in self.steps))

    @property
    def total_linear_solves(self):
        return int(sum(s["linear_solves"] for s in self.steps))

    def to_dict(self):
        return {
            "config": self.config,
            "converged": self.converged,
            "newton_failures": self.newton_failures,
            "average_property": self.average_property,
            "steps": self.steps,
            "totals": {
                "iterations": self.total_iterations,
                "newton_iterations": self.total_newton,
                "linear_solves": self.total_linear_solves,
                "alpha_sum": float(sum(s["alpha"] for s in self.steps)),
            },
        }


# -- discretization ---------------------------------------------------------------------


class Discretization:
    """Spaces, local blocks, data and latent quadrature for one problem on one mesh."""

    def __init__(self, problem, mesh, p, operator=None, quadrature="default", eps1=0.0, eps2=0.0):
        self.problem = problem
        self.mesh = mesh
        self.p = p
        self.spaces = S = Spaces(mesh, p)
        self.blocks = B = assemble_local(S, problem.diffusion)
        self.F = load_vector(S, problem.f)
        self.Mu_inv = np.linalg.inv(B.Mu)
        self.eps1, self.eps2 = float(eps1), float(eps2)
        hp = S.h ** (p + 1)
        self.Smat = hp[:, None, None] * (self.eps1 * B.Mu + self.eps2 * B.Kgrad)
        self.stabilized = self.eps1 > 0 or self.eps2 > 0
        self.Mq_chol = _batched_cholesky(B.Mq)
        self.Mq_Y = _lower_solve(self.Mq_chol, B.C)
        self.Mu_chol = _batched_cholesky(B.Mu)
        self.Mu_chol_inv = np.linalg.inv(self.Mu_chol)

        nl = S.nl
        bnd = mesh.facet_elements[:, 1] < 0
        self.uhat_dirichlet = np.zeros((mesh.num_facets, nl))
        if np.any(bnd):
            self.uhat_dirichlet[bnd] = l2_project_facet(S, problem.g, np.flatnonzero(bnd))
        self.dirichlet_dofs = (np.flatnonzero(bnd)[:, None] * nl + np.arange(nl)).ravel()
        self.free_dofs = (np.flatnonzero(~bnd)[:, None] * nl + np.arange(nl)).ravel()

        self.operator_kind = operator if operator is not None else getattr(problem, "operator", None)
        self.quadrature = quadrature
        self.latent = None
        if self.operator_kind is not None:
            self.set_latent(self.operator_kind, quadrature)

    def set_latent(self, kind, quadrature="default", pointwise=None):
        """Bind the latent operator at the physical latent quadrature points."""
        S = self.spaces
        self.lat_rule = rule = latent_rule(S.kind, self.p, quadrature)
        self.lat_points = S.map_points(rule.points)  # (ne, n, 2)
        self.lat_phi = S.scalar.eval(rule.points)[0]  # (n, nu)
        self.lat_w = rule.weights[None, :] * S.det[:, None]
        if pointwise is not None:
            self.latent = pointwise
        else:
            self.latent = LatentOperator(kind, self.problem.bounds).at(self.lat_points)

    # -- helpers ----------------------------------------------------------------
    def element_uhat(self, uhat):
        """Facet coefficients gathered per element: (ne, nfe * nl)."""
        return uhat.reshape(-1)[self.spaces.facet_dofs]

    def scatter_facets(self, local):
        """Sum per-element facet vectors (ne, nfe * nl) into global facet dofs."""
        return np.bincount(self.spaces.facet_dofs.ravel(), local.ravel(), minlength=self.spaces.num_facet_dofs)

    def latent_values(self, psi):
        return psi @ self.lat_phi.T

    def upsilon(self, psi):
        return self.latent.upsilon(self.latent_values(psi))

    def nonlinear_term(self, psi):
        """``(U(psi), w_j)_h``: (ne, nu)."""
        return np.einsum("en,en,nj->ej", self.lat_w, self.upsilon(psi), self.lat_phi)

    def latent_mass(self, psi):
        """``(U'(psi) w_i, w_j)_h``: (ne, nu, nu)."""
        F = self.latent_mass_factor(psi)
        return F @ np.swapaxes(F, 1, 2)

    def latent_mass_factor(self, psi):
        """``F`` with ``F F^T = (U'(psi) w_i, w_j)_h``: (ne, nu, n)."""
        d = self.latent.upsilon_prime(self.latent_values(psi))
        return np.einsum("nj,en->ejn", self.lat_phi, np.sqrt(self.lat_w * d))

    def project_upsilon(self, psi):
        """``Pi_h U(psi)`` with the latent quadrature."""
        return np.einsum("eij,ej->ei", self.Mu_inv, self.nonlinear_term(psi))

    def l2_norm(self, u):
        return float(np.sqrt(max(np.einsum("ei,eij,ej->", u, self.blocks.Mu, u), 0.0)))

    def mass_defect(self, q):
        """``(div q - f, 1)_T`` per element (the nodal basis sums to one)."""
        return np.einsum("ei,eij->e", q, self.blocks.D) - self.F.sum(axis=1)

    def initial_state(self):
        S = self.spaces
        psi = np.zeros((self.mesh.num_elements, S.nu))
        u = self.project_upsilon(psi) if self.latent is not None else np.zeros_like(psi)
        return ProximalState(np.zeros((self.mesh.num_elements, S.nq)), u, self.uhat_dirichlet.copy(), psi)

    def stabilization(self, psi):
        return np.einsum("eij,ej->ei", self.Smat, psi)


def stabilization_terms(psi, eps1, eps2, p, h, Mu, Kgrad):
    """``eps1 h^{p+1} (psi, w) + eps2 h^{p+1} (grad psi, grad w)`` per element: (ne, nu)."""
    hp = np.asarray(h) ** (p + 1)
    return hp[:, None] * (eps1 * np.einsum("eij,ej->ei", Mu, psi) + eps2 * np.einsum("eij,ej->ei", Kgrad, psi))


def check_boundary_compatibility(problem, mesh, npts=4):
    """Reject ``g`` outside the bounds at facet quadrature points of the boundary."""
    bnd = mesh.boundary_facets
    if len(bnd) == 0:
        return
    line = gauss_unit_interval(npts)
    a = mesh.vertices[mesh.facets[bnd, 0]]
    b = mesh.vertices[mesh.facets[bnd, 1]]
    x = a[:, None, :] + line.points[None, :, None] * (b - a)[:, None, :]
    g = np.broadcast_to(problem.g(x[..., 0], x[..., 1]), x.shape[:-1])
    lo, hi = problem.bounds.evaluate(x)
    slack = 1e-12 * (1 + np.abs(g))
    if np.any(g < lo - slack) or np.any(g > hi + slack):
        raise ConfigError("boundary data g violates the bounds on the boundary")


# -- condensation -------------------------------------------------------------------------


@dataclass
class CondensedSystem:
    K: sp.csr_matrix  # all facet dofs, symmetric
    rhs: np.ndarray
    chol: np.ndarray  # (ne, nq, nq) lower Cholesky factors of the flux block
    Y: np.ndarray  # L^{-1} C
    z: np.ndarray  # L^{-1} h
    extra: dict  # data for recovering (u, psi) from q

    def restricted(self, disc):
        """Interior block and right-hand side with Dirichlet dofs moved over."""
        K = self.K.tocsr()
        f, d = disc.free_dofs, disc.dirichlet_dofs
        ud = disc.uhat_dirichlet.reshape(-1)[d]
        Kff = K[f][:, f]
        rhs = self.rhs[f] - K[f][:, d] @ ud
        return Kff, rhs


def _batched_cholesky(M):
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise AssemblyError("local flux block is not positive definite") from exc


def _lower_solve(L, B):
    return np.linalg.solve(L, B)


def _assemble_facets(disc, Ke):
    S = disc.spaces
    n = S.nfe * S.nl
    rows = np.repeat(S.facet_dofs[:, :, None], n, axis=2).ravel()
    cols = np.repeat(S.facet_dofs[:, None, :], n, axis=1).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(S.num_facet_dofs,) * 2).tocsr()
    K.sum_duplicates()
    return K


LAMBDA_FLOOR = 1e-300


def condense(disc: Discretization, psi_lin, psi_old, alpha) -> CondensedSystem:
    """Linearize at ``psi_lin`` and condense the proximal step onto the facets.

    Each element is rotated into the generalized eigenbasis of
    ``(alpha (W + S), Mu)``: with ``Mu = L L^T`` and
    ``L^{-1} alpha (W + S) L^{-T} = U diag(lam) U^T`` the latent equation and
    the primal row decouple into scalar relations per mode,

        ut_i - (lam_i / alpha) psit_i = chit_i,
        psit_i = psit_old_i + alpha (Ft_i - dt_i . q).

    Eliminating ``psit`` leaves the saddle block
    ``[[Mq, -Dt], [-Dt^T, -diag(1/lam)]]`` in ``(q, ut)``, which is solved in
    the symmetric scaling ``sqrt(lam)``.  No quantity is ever multiplied by
    ``alpha U'`` after being computed from a near-cancelling difference, so
    the step stays accurate for any size of ``alpha U'``.
    """
    B = disc.blocks
    W = disc.latent_mass(psi_lin)
    chi = disc.nonlinear_term(psi_lin) - np.einsum("eij,ej->ei", W, psi_lin)
    WS = W + disc.Smat
    Lu = disc.Mu_chol
    Lu_inv = disc.Mu_chol_inv
    Cmat = alpha * (Lu_inv @ WS @ np.swapaxes(Lu_inv, 1, 2))
    lam, U = np.linalg.eigh(0.5 * (Cmat + np.swapaxes(Cmat, 1, 2)))
    lam = np.maximum(lam, LAMBDA_FLOOR)
    T = np.swapaxes(Lu_inv, 1, 2) @ U  # u = T ut
    Tt = np.swapaxes(T, 1, 2)
    Dt = B.D @ T
    Bt = _lower_solve(disc.Mq_chol, Dt)  # Lq^{-1} Dt
    Y = disc.Mq_Y  # Lq^{-1} C
    s = np.sqrt(lam)
    G = np.swapaxes(Bt, 1, 2) @ Bt
    H = s[:, :, None] * G * s[:, None, :] + np.eye(lam.shape[1])
    R = _batched_cholesky(H)  # H = R R^T (lower)
    SBtY = s[:, :, None] * (np.swapaxes(Bt, 1, 2) @ Y)
    X = _lower_solve(R, SBtY)
    Ke = np.einsum("eik,eil->ekl", Y, Y) - np.einsum("eik,eil->ekl", X, X)
    Ke = 0.5 * (Ke + np.swapaxes(Ke, 1, 2))
    Ft = np.einsum("eji,ej->ei", T, disc.F)  # U^T L^{-1} F
    chit = np.einsum("eji,ej->ei", T, chi)
    psit_old = np.einsum("eji,ej->ei", U, np.einsum("eji,ej->ei", Lu, psi_old))  # U^T L^T psi_old
    gs = s * Ft + chit / s + s * psit_old / alpha
    z = _lower_solve(R, gs[..., None])[..., 0]
    rhs = disc.scatter_facets(np.einsum("eik,ei->ek", X, z))
    K = _assemble_facets(disc, Ke)
    extra = {
        "kind": "fospg",
        "alpha": alpha,
        "psi_old": psi_old,
        "lam": lam,
        "s": s,
        "T": T,
        "U": U,
        "Dt": Dt,
        "Bt": Bt,
        "R": R,
        "z": z,
        "Ft": Ft,
        "chit": chit,
        "psit_old": psit_old,
        "Tt": Tt,
    }
    return CondensedSystem(K, rhs, disc.Mq_chol, Y, z, extra)


def back_substitute(disc: Discretization, cs: CondensedSystem, uhat):
    """Recover element unknowns from facet values: (q, u, psi) or (q, u, None)."""
    ex = cs.extra
    if ex["kind"] == "baseline":
        q, u = _baseline_back(disc, cs, uhat)
        return q, u, None
    ue = disc.element_uhat(uhat)
    Yu = np.einsum("eik,ek->ei", cs.Y, ue)
    s, R = ex["s"], ex["R"]
    # ut = S H^{-1} (gs + S Bt^T Y uhat)
    w = ex["z"] + _lower_solve(R, (s * np.einsum("eji,ej->ei", ex["Bt"], Yu))[..., None])[..., 0]
    ut = s * np.linalg.solve(np.swapaxes(R, 1, 2), w[..., None])[..., 0]
    qv = np.einsum("eij,ej->ei", ex["Bt"], ut) - Yu
    q = np.linalg.solve(np.swapaxes(cs.chol, 1, 2), qv[..., None])[..., 0]
    alpha, lam = ex["alpha"], ex["lam"]
    stiff = lam > 1.0
    from_c = alpha * (ut - ex["chit"]) / lam
    from_a = ex["psit_old"] + alpha * (ex["Ft"] - np.einsum("eji,ej->ei", ex["Dt"], q))
    psit = np.where(stiff, from_c, from_a)
    u = np.einsum("eij,ej->ei", ex["T"], ut)
    psi = np.einsum("eij,ej->ei", ex["T"], psit)
    return q, u, psi


def solve_facets(disc: Discretization, cs: CondensedSystem, check_symmetry=True):
    Kff, rhs = cs.restricted(disc)
    if check_symmetry:
        defect = symmetry_defect(Kff)
        if defect > 1e-12:
            raise AssemblyError(f"condensed matrix not symmetric (defect {defect:.2e})")
    uhat = disc.uhat_dirichlet.copy().reshape(-1)
    uhat[disc.free_dofs] = spd_solve(Kff, rhs)
    return uhat.reshape(disc.uhat_dirichlet.shape)


# -- residuals and the monolithic system ------------------------------------------------


def nonlinear_residual(disc: Discretization, state: ProximalState, alpha, psi_old):
    """Residual of the proximal step in the unscaled form; dict of blocks.

    ``a``: rows tested with v, ``ahat``: interior facet rows, ``b``: flux rows,
    ``c``: latent rows.
    """
    B = disc.blocks
    q, u, psi = state.q, state.u, state.psi
    ue = disc.element_uhat(state.uhat)
    Dtq = np.einsum("eji,ej->ei", B.D, q)
    Ra = alpha * (Dtq - disc.F) + np.einsum("eij,ej->ei", B.Mu, psi - psi_old)
    Rahat = -alpha * disc.scatter_facets(np.einsum("eik,ei->ek", B.C, q))[disc.free_dofs]
    Rb = (
        np.einsum("eij,ej->ei", B.Mq, q)
        - np.einsum("eij,ej->ei", B.D, u)
        + np.einsum("eik,ek->ei", B.C, ue)
    )
    Rc = np.einsum("eij,ej->ei", B.Mu, u) - disc.nonlinear_term(psi) - disc.stabilization(psi)
    return {"a": Ra, "ahat": Rahat, "b": Rb, "c": Rc}


def pairing(res, dstate_blocks, alpha=1.0):
    """``<R, d>`` pairing residual rows with the matching unknowns.

    Rows ``a`` and ``ahat`` carry the factor ``alpha``; they are divided by it
    so the pairing measures the alpha-independent form of the step.
    """
    return float(
        (np.sum(res["a"] * dstate_blocks["u"]) + np.sum(res["ahat"] * dstate_blocks["uhat"])) / alpha
        + np.sum(res["b"] * dstate_blocks["q"])
        + np.sum(res["c"] * dstate_blocks["psi"])
    )


class MonolithicLayout:
    """Global ordering [q, u, psi, uhat_free] for the full four-field system."""

    def __init__(self, disc):
        S = disc.spaces
        ne = disc.mesh.num_elements
        self.nq, self.nu = ne * S.nq, ne * S.nu
        self.nf = len(disc.free_dofs)
        self.shape = (ne, S.nq, S.nu)
        self.offsets = np.cumsum([0, self.nq, self.nu, self.nu, self.nf])
        self.n = int(self.offsets[-1])
        self.disc = disc

    def pack(self, blocks):
        return np.concatenate([blocks["q"].ravel(), blocks["u"].ravel(), blocks["psi"].ravel(), blocks["uhat"]])

    def unpack(self, x):
        ne, nq, nu = self.shape
        o = self.offsets
        return {
            "q": x[o[0] : o[1]].reshape(ne, nq),
            "u": x[o[1] : o[2]].reshape(ne, nu),
            "psi": x[o[2] : o[3]].reshape(ne, nu),
            "uhat": x[o[3] : o[4]],
        }

    def pack_residual(self, res):
        return np.concatenate([res["b"].ravel(), res["a"].ravel(), res["c"].ravel(), res["ahat"]])


def _block_diag(local, offset_r, offset_c, nr, nc):
    ne = local.shape[0]
    r = offset_r + (np.arange(ne)[:, None, None] * nr + np.arange(nr)[None, :, None])
    c = offset_c + (np.arange(ne)[:, None, None] * nc + np.arange(nc)[None, None, :])
    r, c = np.broadcast_arrays(r, c)
    return r.ravel(), c.ravel(), local.ravel()


def monolithic_jacobian(disc: Discretization, psi_lin, alpha):
    """Sparse Jacobian of :func:`nonlinear_residual` at ``psi_lin``.

    Row blocks are ordered (b, a, c, ahat) to match the unknown blocks
    (q, u, psi, uhat_free).
    """
    lay = MonolithicLayout(disc)
    B = disc.blocks
    S = disc.spaces
    ne = disc.mesh.num_elements
    nq, nu = S.nq, S.nu
    o = lay.offsets
    W = disc.latent_mass(psi_lin)
    parts = [
        _block_diag(B.Mq, o[0], o[0], nq, nq),  # b / q
        _block_diag(-B.D, o[0], o[1], nq, nu),  # b / u
        _block_diag(alpha * np.swapaxes(B.D, 1, 2), o[1], o[0], nu, nq),  # a / q
        _block_diag(B.Mu, o[1], o[2], nu, nu),  # a / psi
        _block_diag(B.Mu, o[2], o[1], nu, nu),  # c / u
        _block_diag(-(W + disc.Smat), o[2], o[2], nu, nu),  # c / psi
    ]
    # facet couplings, restricted to free facet dofs
    free_index = -np.ones(S.num_facet_dofs, dtype=np.int64)
    free_index[disc.free_dofs] = np.arange(len(disc.free_dofs))
    fl = free_index[S.facet_dofs]  # (ne, nfe*nl)
    qrows = o[0] + np.arange(ne)[:, None] * nq + np.arange(nq)[None, :]
    rr = np.broadcast_to(qrows[:, :, None], B.C.shape)
    cc = np.broadcast_to(fl[:, None, :], B.C.shape)
    mask = cc >= 0
    parts.append((rr[mask], o[3] + cc[mask], B.C[mask]))  # b / uhat
    parts.append((o[3] + cc[mask], rr[mask], -alpha * B.C[mask]))  # ahat / q
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    J = sp.coo_matrix((vals, (rows, cols)), shape=(lay.n, lay.n)).tocsr()
    J.sum_duplicates()
    return J, lay


def state_blocks(disc, state):
    return {"q": state.q, "u": state.u, "psi": state.psi, "uhat": state.uhat.reshape(-1)[disc.free_dofs]}


def state_from_blocks(disc, blocks, template: ProximalState):
    uhat = disc.uhat_dirichlet.copy().reshape(-1)
    uhat[disc.free_dofs] = blocks["uhat"]
    return ProximalState(blocks["q"], blocks["u"], uhat.reshape(disc.uhat_dirichlet.shape), blocks["psi"], template.k, template.alpha_sum)


def monolithic_step(disc: Discretization, state: ProximalState, alpha, psi_old):
    """One Newton step from ``state`` with a direct solve of the full system."""
    J, lay = monolithic_jacobian(disc, state.psi, alpha)
    R = lay.pack_residual(nonlinear_residual(disc, state, alpha, psi_old))
    x0 = lay.pack(state_blocks(disc, state))
    x = x0 - sp.linalg.spsolve(J.tocsc(), R)
    return state_from_blocks(disc, lay.unpack(x), state)


# -- Newton and the proximal loop --------------------------------------------------------


STALL_DROP = 1e-4
MAX_HALVINGS = 8
PREDICTOR_RTOL = 0.1


@dataclass
class NewtonResult:
    state: ProximalState
    iterations: int
    linear_solves: int
    converged: bool
    errors: list
    floor: Optional[float] = None  # set when stopped at the rounding floor above ntol


def linearized_step(disc, state: ProximalState, alpha, psi_old):
    """Solve the linearized subproblem at ``state.psi`` by static condensation."""
    cs = condense(disc, state.psi, psi_old, alpha)
    uhat = solve_facets(disc, cs)
    q, u, psi = back_substitute(disc, cs, uhat)
    return ProximalState(q, u, uhat, psi, state.k, state.alpha_sum)


def residual_merit(res, alpha):
    """Euclidean norm of the residual with the ``alpha``-scaled rows divided by ``alpha``."""
    return math.sqrt(
        (np.sum(res["a"] ** 2) + np.sum(res["ahat"] ** 2)) / alpha**2
        + np.sum(res["b"] ** 2)
        + np.sum(res["c"] ** 2)
    )


def _shifted(state, d, t, disc):
    uhat = state.uhat.copy()
    flat = uhat.reshape(-1)
    flat[disc.free_dofs] += t * d["uhat"]
    return ProximalState(state.q + t * d["q"], state.u + t * d["u"], uhat, state.psi + t * d["psi"], state.k, state.alpha_sum)


def _backtrack(disc, current, d, alpha, psi_old, merit0, halvings=MAX_HALVINGS):
    """Halve the Newton step until the residual merit drops below ``merit0``."""
    for j in range(1, halvings + 1):
        t = 0.5**j
        trial = _shifted(current, d, t, disc)
        res = nonlinear_residual(disc, trial, alpha, psi_old)
        if residual_merit(res, alpha) < merit0 or j == halvings:
            dt = {key: t * val for key, val in d.items()}
            return trial, res, dt, math.sqrt(abs(pairing(res, dt, alpha)))


def newton_solve(disc, state: ProximalState, alpha, psi_old, mode="fixed", ntol=1e-10, max_iter=30):
    """Newton iterations on one proximal step, one condensed solve each.

    After each update ``d`` the measure ``sqrt(|<R(x_new), d>|)`` (see
    :func:`pairing`) is compared with ``ntol``; for an affine problem it
    vanishes after the first solve.  When ``ntol`` lies below what rounding
    allows, the iteration stops once the measure has dropped by ``STALL_DROP``
    and then fails to halve; the reached value is reported as ``floor``.
    """
    current = state
    errors = []
    prev_merit = None
    for it in range(1, max_iter + 1):
        new = linearized_step(disc, current, alpha, psi_old)
        if not all(np.all(np.isfinite(a)) for a in (new.q, new.u, new.psi, new.uhat)):
            raise SolverError("NaN or inf in the Newton update")
        res = nonlinear_residual(disc, new, alpha, psi_old)
        d = {
            "q": new.q - current.q,
            "u": new.u - current.u,
            "psi": new.psi - current.psi,
            "uhat": (new.uhat - current.uhat).reshape(-1)[disc.free_dofs],
        }
        err = math.sqrt(abs(pairing(res, d, alpha)))
        if errors and err > errors[-1]:
            new, res, d, err = _backtrack(disc, current, d, alpha, psi_old, prev_merit)
        prev_merit = residual_merit(res, alpha)
        errors.append(err)
        current = new
        if mode == "single" or err < ntol:
            return NewtonResult(current, it, it, True, errors)
        if it >= 2 and err < STALL_DROP * errors[0] and err > 0.5 * errors[-2]:
            # quadratic convergence has ended at the rounding floor of the linear solves
            return NewtonResult(current, it, it, True, errors, err)
    return NewtonResult(current, max_iter, max_iter, False, errors)


def _predicted_start(state, alpha, multiplier, previous):
    """Shift ``psi`` by ``alpha * multiplier`` where the multiplier has settled.

    On active cells ``psi`` grows like ``alpha`` times a converging multiplier;
    starting Newton there avoids the saturated region of ``U``.  Elsewhere the
    multiplier decays and the previous iterate is the better start.
    """
    settled = np.abs(multiplier - previous) <= PREDICTOR_RTOL * np.abs(multiplier)
    if not settled.any():
        return state
    start = state.copy()
    start.psi = state.psi + np.where(settled, alpha * multiplier, 0.0)
    return start


def fospg_solve(problem, mesh, config: FospgConfig, monitor: Callable = None, disc: Discretization = None):
    """Run the proximal loop; returns ``(state, report)`` (and keeps ``disc`` on the report)."""
    config.validate()
    try:
        check_boundary_compatibility(problem, mesh)
    except BoundsError as exc:
        raise ConfigError(str(exc)) from exc
    if disc is None:
        disc = Discretization(
            problem, mesh, config.p, config.operator, config.quadrature, config.eps1, config.eps2
        )
    report = RunReport(config=_config_dict(config, disc))
    report.average_property = disc.eps1 == 0.0
    report.disc = disc
    state = disc.initial_state()
    last_change = None
    multiplier = previous = None
    for k in range(1, config.max_iter + 1):
        alpha = config.alpha(k)
        if config.newton == "adaptive":
            ntol = min(0.1, last_change) if last_change is not None else 0.1
        else:
            ntol = config.newton_tol
        start = state
        if config.predictor and previous is not None:
            start = _predicted_start(state, alpha, multiplier, previous)
        result = newton_solve(disc, start, alpha, state.psi, config.newton, ntol, config.newton_max_iter)
        if not result.converged:
            report.newton_failures += 1
            warnings.warn(f"Newton did not reach {ntol:.1e} at step {k}", NewtonWarning, stacklevel=2)
        new = result.state
        change = disc.l2_norm(new.u - state.u)
        new.k = k
        new.alpha_sum = state.alpha_sum + alpha
        upsi = disc.upsilon(new.psi)
        step = {
            "k": k,
            "alpha": alpha,
            "newton_iterations": result.iterations,
            "linear_solves": result.linear_solves,
            "newton_converged": result.converged,
            "newton_errors": [float(e) for e in result.errors],
            "newton_floor": result.floor,
            "update_norm": change,
            "mass_defect_max": float(np.abs(disc.mass_defect(new.q)).max()),
            "min_U": float(upsi.min()),
            "max_U": float(upsi.max()),
            "max_abs_psi": float(np.abs(new.psi).max()),
            "energy": energy(disc, new),
        }
        if monitor is not None:
            step.update(monitor(new, disc))
        report.steps.append(step)
        previous, multiplier = multiplier, (new.psi - state.psi) / alpha
        state = new
        last_change = change
        if change < config.tol:
            report.converged = True
            break
    return state, report


def energy(disc, state):
    """``1/2 ||A^{-1/2} q||^2 - (f, u)``."""
    B = disc.blocks
    return float(0.5 * np.einsum("ei,eij,ej->", state.q, B.Mq, state.q) - np.sum(disc.F * state.u))


def _config_dict(config, disc):
    d = asdict(config)
    d["alpha"] = config.alpha.describe()
    d["operator"] = disc.operator_kind
    return d


# -- baseline -------------------------------------------------------------------------------


def condense_baseline(disc: Discretization) -> CondensedSystem:
    """Condensation of the linear hybrid mixed method (no latent variable)."""
    B = disc.blocks
    L = disc.Mq_chol
    Y = disc.Mq_Y
    Bm = _lower_solve(L, B.D)  # L^{-1} D
    Qb, Rb = np.linalg.qr(Bm)  # orthonormal basis of range(L^{-1} D)
    Yp = Y - Qb @ (np.swapaxes(Qb, 1, 2) @ Y)
    Ke = np.einsum("eik,eil->ekl", Yp, Yp)
    # u = Sd^{-1} (F + Bm^T Y uhat) with Sd = Bm^T Bm = Rb^T Rb
    Sd_inv = np.linalg.inv(np.swapaxes(Rb, 1, 2) @ Rb)
    zF = np.einsum("eij,ejk,ek->ei", Bm, Sd_inv, disc.F)  # Bm Sd^{-1} F
    rhs = disc.scatter_facets(np.einsum("eik,ei->ek", Y, zF))
    # facet eq: sum Y^T (Bm u - Y uhat) = 0 -> sum Yp^T Yp uhat = sum Y^T Bm Sd^{-1} F
    K = _assemble_facets(disc, Ke)
    extra = {"kind": "baseline", "Sd_inv": Sd_inv, "Bm": Bm, "zF": zF}
    return CondensedSystem(K, rhs, L, Y, zF, extra)


def _baseline_back(disc, cs, uhat):
    B = disc.blocks
    ue = disc.element_uhat(uhat)
    ex = cs.extra
    Yu = np.einsum("eik,ek->ei", cs.Y, ue)
    u = np.einsum("eij,ej->ei", ex["Sd_inv"], disc.F + np.einsum("eji,ej->ei", ex["Bm"], Yu))
    w = np.einsum("eij,ej->ei", ex["Bm"], u) - Yu
    q = np.linalg.solve(np.swapaxes(cs.chol, 1, 2), w[..., None])[..., 0]
    return q, u


def baseline_mixed_solve(problem, mesh, p, disc: Discretization = None):
    """Standard hybridized RT mixed method; returns ``(q, u, uhat)``."""
    if disc is None:
        disc = Discretization(problem, mesh, p, operator=None)
    cs = condense_baseline(disc)
    uhat = solve_facets(disc, cs)
    q, u = _baseline_back(disc, cs, uhat)
    return q, u, uhat


# -- multiplier recovery --------------------------------------------------------------------


def recover_multipliers(disc: Discretization, q, u):
    """Facet values from ``(q, u)`` by the flux equation, averaged over both sides.

    Per element solve ``C lam = -Mq q + D u`` in the least squares sense with
    Dirichlet facets fixed; returns (nf, p+1) coefficients (boundary rows are
    the Dirichlet data).
    """
    B = disc.blocks
    S = disc.spaces
    rhs = -np.einsum("eij,ej->ei", B.Mq, q) + np.einsum("eij,ej->ei", B.D, u)
    bnd_local = (disc.mesh.facet_elements[disc.mesh.element_facets, 1] < 0)  # (ne, nfe)
    mask = np.repeat(bnd_local, S.nl, axis=1)
    ud = disc.element_uhat(disc.uhat_dirichlet)
    rhs = rhs - np.einsum("eik,ek->ei", B.C, np.where(mask, ud, 0.0))
    Cf = np.where(mask[:, None, :], 0.0, B.C)
    sol = np.einsum("eki,ei->ek", np.linalg.pinv(Cf), rhs)
    keep = np.where(mask, 0.0, 1.0)
    out = disc.scatter_facets(sol * keep)
    count = disc.scatter_facets(keep)
    res = np.where(count > 0, out / np.maximum(count, 1), 0.0)
    res[disc.dirichlet_dofs] = disc.uhat_dirichlet.reshape(-1)[disc.dirichlet_dofs]
    return res.reshape(disc.uhat_dirichlet.shape)
