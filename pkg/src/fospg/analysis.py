"""Error norms, rates, bound scans, mass conservation and the scaling limiter."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fem.operators import dg_norm, flux_energy
from .fem.quadrature import element_rule
from .fem.spaces import DiffusionTensor, Spaces
from .latent import LatentOperator, discrete_bregman


def _rule(spaces: Spaces, degree):
    return element_rule(spaces.kind, degree if degree is not None else 2 * spaces.p + 3)


def _weights(spaces: Spaces, rule):
    return rule.weights[None, :] * spaces.det[:, None]


# -- errors ----------------------------------------------------------------------------


def l2_error(spaces: Spaces, u, exact, degree=None):
    """``||u - u_h||_{L2}`` for broken coefficients ``u`` (ne, nu)."""
    rule = _rule(spaces, degree)
    x = spaces.map_points(rule.points)
    diff = spaces.scalar_values(u, rule.points) - np.broadcast_to(exact(x[..., 0], x[..., 1]), x.shape[:-1])
    return math.sqrt(max(float(np.sum(_weights(spaces, rule) * diff**2)), 0.0))


def latent_l2_error(spaces: Spaces, psi, operator: LatentOperator, exact, degree=None):
    """``||u - U(psi_h)||_{L2}`` with ``U`` evaluated pointwise (bounds sampled at each point)."""
    rule = _rule(spaces, degree)
    x = spaces.map_points(rule.points)
    up = operator.at(x).upsilon(spaces.scalar_values(psi, rule.points))
    diff = up - np.broadcast_to(exact(x[..., 0], x[..., 1]), x.shape[:-1])
    return math.sqrt(max(float(np.sum(_weights(spaces, rule) * diff**2)), 0.0))


def flux_l2_error(spaces: Spaces, q, exact_q, degree=None, diffusion: DiffusionTensor = None):
    """``||q - q_h||_{L2}``; with ``diffusion`` the weighted ``||A^{-1/2}(q - q_h)||``."""
    rule = _rule(spaces, degree)
    x = spaces.map_points(rule.points)
    diff = spaces.flux_values(q, rule.points) - exact_q(x[..., 0], x[..., 1])
    if diffusion is not None:
        Ainv = diffusion.inverse(x, spaces.point_regions(len(rule)))
        sq = np.einsum("enc,encd,end->en", diff, Ainv, diff)
    else:
        sq = np.sum(diff**2, axis=-1)
    return math.sqrt(max(float(np.sum(_weights(spaces, rule) * sq)), 0.0))


def rates(h, errors):
    """Observed orders ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``; NaN where undefined."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
    return np.where(np.isfinite(r), r, np.nan)


@dataclass
class ErrorRecord:
    h: float
    dofs: int
    err_u: float
    err_latent: float
    err_flux: float
    rate_u: float = float("nan")
    rate_latent: float = float("nan")
    rate_flux: float = float("nan")
    extra: dict = field(default_factory=dict)


def attach_rates(records):
    """Fill the rate fields from consecutive records (first record keeps NaN)."""
    h = [r.h for r in records]
    for name in ("u", "latent", "flux"):
        rs = rates(h, [getattr(r, f"err_{name}") for r in records])
        for rec, value in zip(records[1:], rs):
            setattr(rec, f"rate_{name}", float(value))
    return records


# -- conservation -------------------------------------------------------------------------


def mass_indicator(disc, q):
    """``xi_T = |(div q_h - f, 1)_T|`` per element and its maximum.

    The divergence of an RT function is integrated exactly through the
    local blocks; ``f`` with the oversampled load quadrature.
    """
    xi = np.abs(disc.mass_defect(q))
    return xi, float(xi.max()) if xi.size else 0.0


# -- bound scans ----------------------------------------------------------------------------


def sample_grid(kind, m=10):
    """Per-element ``m x m`` sample grid: tensor grid on the square, barycentric lattice on the triangle."""
    t = np.linspace(0.0, 1.0, m)
    X, Y = np.meshgrid(t, t, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    if kind == "triangle":
        pts = pts[pts.sum(axis=1) <= 1.0 + 1e-14]
    return pts


def scan_points(disc, m=10):
    """Reference points used by bound scans: latent quadrature, element quadrature and the sample grid."""
    S = disc.spaces
    parts = [element_rule(S.kind, 2 * S.p + 2).points, sample_grid(S.kind, m)]
    if getattr(disc, "lat_rule", None) is not None:
        parts.insert(0, disc.lat_rule.points)
    return np.vstack(parts)


@dataclass
class ScanResult:
    min: float
    max: float
    violations: list  # (element, physical point, value)


def dmp_scan(disc, coeffs, lower=None, upper=None, latent=False, m=10, operator=None):
    """Extrema of a broken field (``latent=False``) or of ``U(psi_h)`` over the scan points.

    ``U`` is evaluated through the latent operator at every scan point, so its
    extrema stay within the closed bounds.  Violations are recorded against
    ``lower``/``upper`` (constants or callables; defaults from the problem).
    """
    S = disc.spaces
    pts = scan_points(disc, m)
    x = S.map_points(pts)
    vals = S.scalar_values(coeffs, pts)
    bounds = disc.problem.bounds
    if latent:
        op = operator or LatentOperator(disc.operator_kind, bounds)
        vals = op.at(x).upsilon(vals)
    lo = _bound_values(bounds.lower if lower is None else lower, x)
    hi = _bound_values(bounds.upper if upper is None else upper, x)
    bad = (vals < lo) | (vals > hi)
    e, n = np.nonzero(bad)
    violations = [(int(a), x[a, b].tolist(), float(vals[a, b])) for a, b in zip(e[:100], n[:100])]
    return ScanResult(float(vals.min()), float(vals.max()), violations)


def _bound_values(b, x):
    if callable(b):
        return np.broadcast_to(b(x[..., 0], x[..., 1]), x.shape[:-1])
    return np.full(x.shape[:-1], float(b))


def cell_averages(disc, coeffs):
    """``(1/|T|) int_T u_h`` per element."""
    return np.sum(disc.blocks.Mu.sum(axis=1) * coeffs, axis=1) / disc.spaces.areas


def contact_free(disc, u_coeffs, tol, m=10):
    """Elements with ``min (u_h - lower) > 10 tol`` over the scan points."""
    S = disc.spaces
    pts = scan_points(disc, m)
    x = S.map_points(pts)
    gap = S.scalar_values(u_coeffs, pts) - _bound_values(disc.problem.bounds.lower, x)
    return gap.min(axis=1) > 10 * tol


# -- limiter ----------------------------------------------------------------------------------


def limiter_theta(avg, m, M, lower, upper):
    """``min(|(upper - avg)/(M - avg)|, |(lower - avg)/(m - avg)|, 1)`` with 0/0 guarded to 1."""
    avg, m, M = (np.asarray(a, dtype=float) for a in (avg, m, M))
    lower = np.broadcast_to(np.asarray(lower, dtype=float), avg.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), avg.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        top = np.where(M > avg, np.abs((upper - avg) / (M - avg)), np.inf)
        bot = np.where(m < avg, np.abs((lower - avg) / (m - avg)), np.inf)
    return np.minimum(np.minimum(top, bot), 1.0)


def limiter(disc, u, lower=0.0, upper=1.0, m=10):
    """Scale each cell about its average so the scan points respect ``[lower, upper]``.

    The nodal basis sums to one, so adding the average to every coefficient
    adds it as a constant.  Returns ``(u_tilde, theta)``.
    """
    S = disc.spaces
    pts = scan_points(disc, m)
    vals = S.scalar_values(u, pts)
    avg = cell_averages(disc, u)
    theta = limiter_theta(avg, vals.min(axis=1), vals.max(axis=1), lower, upper)
    return avg[:, None] + theta[:, None] * (u - avg[:, None]), theta


# -- Bregman monitor ----------------------------------------------------------------------------


def bregman_distance(disc, u, v):
    """``D_h(u_h, v_h)`` with the latent quadrature of ``disc``."""
    uv = disc.latent_values(u)
    vv = disc.latent_values(v)
    return discrete_bregman(disc.latent, uv, vv, disc.lat_w)


def bregman_monitor(disc, u, q, u_star, q_star, u0, alpha_sum, lifting=None):
    """Ratio ``(||u - u*||_DG^2 + ||A^{-1/2}(q - q*)||^2) * sum(alpha) / D_h(u*, u0)``.

    Returns ``(error_squared, ratio)``; the ratio is ``inf`` when ``D_h`` vanishes.
    """
    S = disc.spaces
    err2 = dg_norm(S, u - u_star, disc.problem.diffusion) ** 2 + flux_energy(S, disc.blocks.Mq, q - q_star)
    d = bregman_distance(disc, u_star, u0)
    return err2, (err2 * alpha_sum / d if d > 0 else math.inf)
