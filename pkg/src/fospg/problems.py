"""Benchmark problems: three anisotropic diffusion and two obstacle problems.

Each :class:`ProblemSpec` carries the data the solver needs (diffusion,
source, boundary data, bounds) together with the defaults used in the
benchmarks: latent operator, step-size schedule, stabilization and, where
known, the exact solution and its flux ``q = -A grad u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import mesh as meshes
from .fem.spaces import DiffusionTensor
from .latent import Bounds
from .solver import AlphaSchedule, ConfigError


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    make_mesh: Callable  # mesh parameter -> Mesh
    mesh_param: int  # default (coarsest) mesh parameter
    refine_param: Callable  # (param, levels) -> param after ``levels`` halvings of h
    diffusion: DiffusionTensor
    f: Callable
    g: Callable
    bounds: Bounds
    operator: str
    alpha: AlphaSchedule
    eps: dict = field(default_factory=dict)  # p -> (eps1, eps2)
    exact_u: Optional[Callable] = None
    exact_q: Optional[Callable] = None  # (x, y) -> (..., 2)
    tol: float = 1e-8
    description: str = ""

    def mesh(self, param=None):
        return self.make_mesh(self.mesh_param if param is None else param)

    def mesh_sequence(self, levels, start=None):
        start = self.mesh_param if start is None else start
        return [self.make_mesh(self.refine_param(start, k)) for k in range(levels)]

    def eps_for(self, p):
        return self.eps.get(p, (0.0, 0.0))

    @property
    def has_exact(self):
        return self.exact_u is not None and self.exact_q is not None


def _doubling(param, levels):
    return param * 2**levels


def _additive(param, levels):
    return param + levels


def _zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def _const(c):
    def func(x, y):
        return np.full(np.broadcast(x, y).shape, float(c))

    return func


# -- anisotropic diffusion -----------------------------------------------------------


def _ramp(t, a, b, left, right):
    """``left`` up to ``a``, linear to ``right`` at ``b``, then ``right``."""
    t = np.asarray(t, dtype=float)
    return np.where(t <= a, left, np.where(t <= b, left + (right - left) * (t - a) / (b - a), right))


def oblique_bottom(t):
    return _ramp(t, 0.2, 0.3, 1.0, 0.5)


def oblique_top(t):
    return _ramp(t, 0.7, 0.8, 0.5, 0.0)


def oblique_g(x, y, atol=1e-12):
    """Boundary data on the unit square; the side rules reuse the bottom and top profiles."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    out = np.zeros(x.shape)
    left, right = np.abs(x) < atol, np.abs(x - 1) < atol
    out = np.where(left, oblique_bottom(y), out)
    out = np.where(right, oblique_top(y), out)
    out = np.where(np.abs(y) < atol, oblique_bottom(x), out)
    out = np.where(np.abs(y - 1) < atol, oblique_top(x), out)
    return out


def oblique_flow() -> ProblemSpec:
    theta = 2 * np.pi / 9
    return ProblemSpec(
        name="oblique-flow",
        make_mesh=meshes.unit_square_triangles,
        mesh_param=8,
        refine_param=_doubling,
        diffusion=DiffusionTensor.rotated(lambda x, y: np.full(np.shape(x), theta), 1.0, 1e-3, "oblique"),
        f=_zero,
        g=oblique_g,
        bounds=Bounds(0.0, 1.0),
        operator="algebraic",
        alpha=AlphaSchedule.geometric(1.0, 4.0),
        eps={2: (0.0, 0.0)},
        description="rotated anisotropy with piecewise linear boundary data",
    )


def vertical_faults() -> ProblemSpec:
    return ProblemSpec(
        name="vertical-faults",
        make_mesh=meshes.vertical_faults_mesh,
        mesh_param=20,
        refine_param=_doubling,
        diffusion=DiffusionTensor.piecewise({1: np.diag([1e3, 10.0]), 2: np.diag([1e-2, 1e-3])}, "faults"),
        f=_zero,
        g=lambda x, y: 1.0 - np.asarray(x, dtype=float) + 0.0 * np.asarray(y),
        bounds=Bounds(0.0, 1.0),
        operator="algebraic",
        alpha=AlphaSchedule.geometric(1.0, 4.0),
        description="strongly heterogeneous layered medium",
    )


HOLE_LO, HOLE_HI = 4 / 9, 5 / 9


def punctured_theta(x, y):
    return np.pi * np.sin(x) * np.sin(y)


def punctured_g(x, y, atol=1e-12):
    """1 on the hole boundary, 0 on the outer boundary."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    inside = (x > HOLE_LO - atol) & (x < HOLE_HI + atol) & (y > HOLE_LO - atol) & (y < HOLE_HI + atol)
    return np.where(inside, 1.0, 0.0)


def punctured_domain() -> ProblemSpec:
    return ProblemSpec(
        name="punctured",
        make_mesh=meshes.punctured_square,
        mesh_param=18,
        refine_param=_doubling,
        diffusion=DiffusionTensor.rotated(punctured_theta, 1e3, 1.0, "punctured"),
        f=_zero,
        g=punctured_g,
        bounds=Bounds(0.0, 1.0),
        operator="algebraic",
        alpha=AlphaSchedule.geometric(1e-4, 1.5),
        eps={2: (0.1, 0.1), 3: (0.1, 0.1)},
        description="square with a hole, spatially rotating anisotropy",
    )


# -- obstacle problems ------------------------------------------------------------------


def biactive_u(x, y):
    x = np.asarray(x, dtype=float) + 0.0 * np.asarray(y)
    return np.where(x < 0, 0.0, x**4)


def biactive_f(x, y):
    x = np.asarray(x, dtype=float) + 0.0 * np.asarray(y)
    return np.where(x < 0, 0.0, -12.0 * x**2)


def biactive_q(x, y):
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    q = np.zeros(x.shape + (2,))
    q[..., 0] = np.where(x < 0, 0.0, -4.0 * x**3)
    return q


def biactive() -> ProblemSpec:
    return ProblemSpec(
        name="biactive",
        make_mesh=lambda n: meshes.unit_square_triangles(n, -1.0, 1.0),
        mesh_param=6,
        refine_param=_doubling,
        diffusion=DiffusionTensor.identity(),
        f=biactive_f,
        g=biactive_u,
        bounds=Bounds(0.0, np.inf),
        operator="exp",
        alpha=AlphaSchedule.geometric(1.0, 1.5),
        eps={2: (0.0, 1e-6), 3: (0.0, 1e-7)},
        exact_u=biactive_u,
        exact_q=biactive_q,
        tol=1e-12,
        description="smooth solution with a biactive set",
    )


OBSTACLE_KINK = 9 / 20


def lambert_w_minus1(c, seed=-4.1, tol=1e-15, max_iter=50):
    """Lower real branch of Lambert W at ``c`` in (-1/e, 0) by Newton on ``w e^w = c``."""
    if not -1 / math.e < c < 0:
        raise ValueError("the lower branch needs -1/e < c < 0")
    w = seed
    for _ in range(max_iter):
        ew = math.exp(w)
        step = (w * ew - c) / (ew * (w + 1))
        w -= step
        if abs(step) <= tol * abs(w):
            break
    return w


def contact_radius():
    """Free boundary radius ``a = exp(W_{-1}(-1/(2 e^2)) / 2 + 1)`` and ``Q = sqrt(1/4 - a^2) / ln a``."""
    w = lambert_w_minus1(-1 / (2 * math.e**2))
    a = math.exp(w / 2 + 1)
    return a, math.sqrt(0.25 - a * a) / math.log(a)


def _cap(r):
    return np.sqrt(np.maximum(0.25 - r * r, 0.0))


def spherical_lower(x, y):
    """Hemisphere of radius 1/2 continued linearly (C^1) beyond r = 9/20."""
    r = np.hypot(x, y)
    r0 = OBSTACLE_KINK
    v0 = math.sqrt(0.25 - r0 * r0)
    slope = -r0 / v0
    return np.where(r <= r0, _cap(np.minimum(r, r0)), v0 + slope * (r - r0))


def spherical_u(x, y):
    a, Q = contact_radius()
    r = np.hypot(x, y)
    return np.where(r > a, Q * np.log(np.maximum(r, a)), _cap(np.minimum(r, a)))


def spherical_q(x, y):
    """``-grad u``: ``-Q x / r^2`` outside the contact disk, ``x / sqrt(1/4 - r^2)`` inside."""
    a, Q = contact_radius()
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    r2 = x * x + y * y
    out = r2 > a * a
    outer = -Q / np.where(out, r2, 1.0)
    inner = 1.0 / np.sqrt(np.maximum(0.25 - r2, 1e-300))
    c = np.where(out, outer, inner)
    return np.stack([c * x, c * y], axis=-1)


def spherical_obstacle() -> ProblemSpec:
    return ProblemSpec(
        name="spherical",
        make_mesh=meshes.polygonal_disk,
        mesh_param=1,
        refine_param=_additive,
        diffusion=DiffusionTensor.identity(),
        f=_zero,
        g=_zero,
        bounds=Bounds(spherical_lower, np.inf),
        operator="exp",
        alpha=AlphaSchedule.constant(1.0),
        eps={2: (0.0, 2e-4)},
        exact_u=spherical_u,
        exact_q=spherical_q,
        tol=1e-6,
        description="unit disk over a hemispherical obstacle",
    )


def manufactured(name, u, grad_u, f, bounds, mesh_param=4, operator="exp", diffusion=None):
    """Problem on the unit square from a closed-form solution ``u`` with ``-div(A grad u) = f``."""
    diffusion = diffusion or DiffusionTensor.identity()

    def q(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        pts = np.stack([x, y], axis=-1)
        return -np.einsum("...ij,...j->...i", diffusion(pts), grad_u(x, y))

    return ProblemSpec(
        name=name,
        make_mesh=meshes.unit_square_triangles,
        mesh_param=mesh_param,
        refine_param=_doubling,
        diffusion=diffusion,
        f=f,
        g=u,
        bounds=bounds,
        operator=operator,
        alpha=AlphaSchedule.geometric(1.0, 2.0),
        exact_u=u,
        exact_q=q,
    )


REGISTRY = {
    "oblique-flow": oblique_flow,
    "vertical-faults": vertical_faults,
    "punctured": punctured_domain,
    "biactive": biactive,
    "spherical": spherical_obstacle,
}


def get_problem(name: str) -> ProblemSpec:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; choose from {sorted(REGISTRY)}") from None


def check_problem(problem: ProblemSpec, mesh=None, samples=10_000, seed=0):
    """Sample the declared invariants: g within the bounds, A eigenvalues within its bounds."""
    from .solver import check_boundary_compatibility

    mesh = mesh if mesh is not None else problem.mesh()
    check_boundary_compatibility(problem, mesh)
    rng = np.random.default_rng(seed)
    lo_v, hi_v = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    pts = lo_v + (hi_v - lo_v) * rng.random((samples, 2))
    regions = rng.integers(1, 3, samples)
    eig = np.linalg.eigvalsh(problem.diffusion(pts, regions))
    lo, hi = problem.diffusion.bounds
    if lo is not None and np.any(eig < lo * (1 - 1e-12)):
        raise ConfigError("diffusion eigenvalue below its declared bound")
    if hi is not None and np.any(eig > hi * (1 + 1e-12)):
        raise ConfigError("diffusion eigenvalue above its declared bound")
    return True
