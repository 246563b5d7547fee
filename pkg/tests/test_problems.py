import math

import numpy as np
import pytest

from fospg.problems import (
    REGISTRY,
    biactive,
    check_problem,
    contact_radius,
    get_problem,
    manufactured,
    oblique_flow,
    punctured_domain,
    punctured_theta,
    spherical_lower,
    spherical_obstacle,
    vertical_faults,
)
from fospg.latent import Bounds
from fospg.mesh import HOLE
from fospg.solver import ConfigError


def test_oblique_flow():
    pr = oblique_flow()
    assert pr.g(0.1, 0.0) == 1.0 and pr.g(0.25, 0.0) == pytest.approx(0.75) and pr.g(0.9, 1.0) == 0.0
    t = np.linspace(0, 1, 11)
    assert np.allclose(pr.g(0 * t, t), pr.g(t, 0 * t)) and np.allclose(pr.g(1 + 0 * t, t), pr.g(t, 1 + 0 * t))
    A = pr.diffusion(np.array([[0.3, 0.3]]))[0]
    c, s = math.cos(2 * math.pi / 9), math.sin(2 * math.pi / 9)
    Q = np.array([[c, -s], [s, c]])
    assert np.allclose(A, Q @ np.diag([1.0, 1e-3]) @ Q.T, atol=1e-15)
    assert pr.operator == "algebraic" and pr.alpha(2) == 16.0 and pr.eps_for(2) == (0.0, 0.0)


def test_vertical_faults():
    pr = vertical_faults()
    assert np.allclose(pr.diffusion(np.array([[0.25, 0.1]]), np.array([1]))[0], np.diag([1e3, 10.0]))
    assert np.allclose(pr.diffusion(np.array([[0.25, 0.175]]), np.array([2]))[0], np.diag([1e-2, 1e-3]))
    assert pr.g(0.0, 0.3) == 1.0 and pr.g(1.0, 0.3) == 0.0


def test_punctured():
    pr = punctured_domain()
    assert punctured_theta(0.0, 0.0) == 0.0
    assert punctured_theta(0.5, 0.5) == pytest.approx(math.pi * math.sin(0.5) ** 2)
    assert pr.alpha(1) == pytest.approx(1.5e-4) and pr.eps_for(2) == (0.1, 0.1)
    m = pr.mesh(9)
    hole = m.boundary_facets[m.boundary_markers[m.boundary_facets] == HOLE]
    mid = m.vertices[m.facets[hole]].mean(axis=1)
    assert np.all(pr.g(mid[:, 0], mid[:, 1]) == 1.0)
    outer = m.boundary_facets[m.boundary_markers[m.boundary_facets] != HOLE]
    mid = m.vertices[m.facets[outer]].mean(axis=1)
    assert np.all(pr.g(mid[:, 0], mid[:, 1]) == 0.0)


def test_biactive():
    pr = biactive()
    assert pr.exact_u(-0.5, 0.3) == 0.0 and pr.exact_u(1.0, 0.2) == 1.0 and pr.f(0.5, 0.1) == -3.0
    # -laplace u = f on x > 0 by centered differences
    x = np.linspace(0.1, 0.9, 9)
    y = 0.3 + 0 * x
    d = 1e-3
    lap = (pr.exact_u(x + d, y) + pr.exact_u(x - d, y) + pr.exact_u(x, y + d) + pr.exact_u(x, y - d) - 4 * pr.exact_u(x, y)) / d**2
    assert np.max(np.abs(-lap - pr.f(x, y))) < 1e-5
    assert np.allclose(pr.exact_q(x, y)[:, 0], -4 * x**3) and pr.alpha(1) == 1.5


def test_spherical():
    pr = spherical_obstacle()
    a, Q = contact_radius()
    assert a == pytest.approx(0.34898, abs=5e-6)
    assert spherical_lower(0.0, 0.0) == 0.5
    r0 = 9 / 20
    v0 = math.sqrt(0.25 - r0**2)
    assert spherical_lower(r0, 0.0) == pytest.approx(v0, abs=1e-15)
    d = 1e-6
    slope = (spherical_lower(r0 + d, 0.0) - spherical_lower(r0, 0.0)) / d
    assert slope == pytest.approx(-r0 / v0, rel=1e-9)
    # contact matching at r = a: value and radial derivative
    assert Q * math.log(a) == pytest.approx(math.sqrt(0.25 - a * a), abs=1e-10)
    assert Q / a == pytest.approx(-a / math.sqrt(0.25 - a * a), abs=1e-10)
    assert pr.exact_u(0.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert pr.alpha(5) == 1.0


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_registry_invariants(name):
    pr = get_problem(name)
    assert pr.name == name
    assert check_problem(pr)


def test_unknown_problem():
    with pytest.raises(ConfigError):
        get_problem("nope")


def test_manufactured_flux():
    pr = manufactured("m", lambda x, y: x * y, lambda x, y: np.stack([y, x], axis=-1), lambda x, y: 0 * x, Bounds(-1.0, 2.0))
    assert np.allclose(pr.exact_q(0.5, 0.25), [-0.25, -0.5]) and pr.has_exact
