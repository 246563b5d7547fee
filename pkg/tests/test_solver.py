import math

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import SMALL_MESHES, perturbed, small_problem
from fospg.analysis import cell_averages
from fospg.latent import Bounds
from fospg.linalg import AssemblyError, SPDFactor, spd_solve, symmetry_defect
from fospg.mesh import polygonal_disk, unit_square_rectangles, unit_square_triangles
from fospg.solver import (
    AlphaSchedule,
    ConfigError,
    Discretization,
    FospgConfig,
    ProximalState,
    _predicted_start,
    baseline_mixed_solve,
    condense,
    fospg_solve,
    linearized_step,
    monolithic_jacobian,
    monolithic_step,
    newton_solve,
    nonlinear_residual,
    recover_multipliers,
    solve_facets,
    stabilization_terms,
    state_blocks,
)


def random_state(disc, rng, scale=1.0):
    S = disc.spaces
    ne = disc.mesh.num_elements
    uhat = disc.uhat_dirichlet.copy()
    flat = uhat.reshape(-1)
    flat[disc.free_dofs] = rng.uniform(0, 1, len(disc.free_dofs))
    return ProximalState(
        rng.standard_normal((ne, S.nq)),
        rng.uniform(0.1, 0.9, (ne, S.nu)),
        uhat,
        scale * rng.standard_normal((ne, S.nu)),
    )


def blocks_close(a, b, rtol):
    for key in ("q", "u", "psi", "uhat"):
        scale = max(np.max(np.abs(b[key])), 1.0)
        assert np.max(np.abs(a[key] - b[key])) < rtol * scale, key


# -- condensation -----------------------------------------------------------------------


@pytest.mark.parametrize("mesh_name", sorted(SMALL_MESHES))
@pytest.mark.parametrize("p", [0, 1, 2])
def test_condensed_matches_monolithic(mesh_name, p):
    rng = np.random.default_rng(p)
    mesh = SMALL_MESHES[mesh_name]()
    disc = Discretization(small_problem(), mesh, p, eps1=0.1 * p, eps2=0.05 * p)
    state = random_state(disc, rng)
    psi_old = rng.standard_normal(state.psi.shape)
    alpha = 3.7
    cond = linearized_step(disc, state, alpha, psi_old)
    mono = monolithic_step(disc, state, alpha, psi_old)
    blocks_close(state_blocks(disc, cond), state_blocks(disc, mono), 1e-10)
    assert np.array_equal(cond.uhat.reshape(-1)[disc.dirichlet_dofs], disc.uhat_dirichlet.reshape(-1)[disc.dirichlet_dofs])
    Kff, _ = condense(disc, state.psi, psi_old, alpha).restricted(disc)
    assert symmetry_defect(Kff) < 1e-12
    assert np.all(SPDFactor(Kff).pivots > 0)


def test_condensation_survives_saturated_latent():
    rng = np.random.default_rng(3)
    disc = Discretization(small_problem(), unit_square_triangles(2), 1)
    state = random_state(disc, rng, scale=800.0)  # beyond the clamp: U' at the floor
    new = linearized_step(disc, state, 1e4, state.psi)
    assert all(np.all(np.isfinite(a)) for a in (new.q, new.u, new.psi))


# -- Jacobian --------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(10 + seed)
    mesh = perturbed(unit_square_triangles(2), seed=seed)
    disc = Discretization(small_problem(), mesh, 1 + seed % 2, eps1=0.1, eps2=0.1)
    state = random_state(disc, rng)
    psi_old = rng.standard_normal(state.psi.shape)
    alpha = 2.0
    J, lay = monolithic_jacobian(disc, state.psi, alpha)
    x0 = lay.pack(state_blocks(disc, state))
    d = rng.standard_normal(lay.n)

    def R(x):
        b = lay.unpack(x)
        uhat = disc.uhat_dirichlet.copy().reshape(-1)
        uhat[disc.free_dofs] = b["uhat"]
        st = ProximalState(b["q"], b["u"], uhat.reshape(disc.uhat_dirichlet.shape), b["psi"])
        return lay.pack_residual(nonlinear_residual(disc, st, alpha, psi_old))

    t = 1e-6
    fd = (R(x0 + t * d) - R(x0 - t * d)) / (2 * t)
    Jd = J @ d
    assert np.linalg.norm(fd - Jd) < 1e-6 * np.linalg.norm(Jd)


# -- Newton ------------------------------------------------------------------------------


class IdentityLatent:
    """Test hook: U(z) = z, making each proximal step affine."""

    def upsilon(self, z):
        return np.asarray(z, dtype=float)

    def upsilon_prime(self, z):
        return np.ones_like(np.asarray(z, dtype=float))


def test_newton_affine_one_iteration():
    disc = Discretization(small_problem(), unit_square_triangles(2), 1)
    disc.set_latent("fermi-dirac", pointwise=IdentityLatent())
    st = disc.initial_state()
    # the square-root measure puts the rounding floor near sqrt(machine eps)
    res = newton_solve(disc, st, 5.0, st.psi, "fixed", 1e-6)
    assert res.errors[0] < 1e-6
    assert res.converged and res.iterations == 1 and res.linear_solves == 1


def test_newton_quadratic_contraction():
    disc = Discretization(small_problem(), unit_square_triangles(1), 1)
    st = disc.initial_state()
    res = newton_solve(disc, st, 10.0, st.psi, "fixed", 1e-14, max_iter=30)
    e = res.errors
    assert res.converged and len(e) >= 3
    # quadratic phase: e_{n+1} / e_n^2 stays bounded while above the rounding floor
    ratios = [b / a**2 for a, b in zip(e[:-1], e[1:]) if b > 1e-12 and a < 1e-1]
    assert all(r < 1e3 for r in ratios)


def test_newton_single_mode_one_solve():
    disc = Discretization(small_problem(), unit_square_triangles(2), 0)
    st = disc.initial_state()
    res = newton_solve(disc, st, 1.0, st.psi, "single")
    assert res.iterations == 1 and res.linear_solves == 1


# -- proximal loop -------------------------------------------------------------------------


def test_zero_data_zero_solution():
    pr = small_problem(f=lambda x, y: 0 * x, g=lambda x, y: 0 * x, bounds=Bounds(-10.0, 10.0))
    for mesh in (unit_square_triangles(2), polygonal_disk(0)):
        st, rep = fospg_solve(pr, mesh, FospgConfig(p=1, alpha=AlphaSchedule.constant(1.0)))
        assert rep.converged and rep.total_iterations <= 3
        assert np.max(np.abs(st.u)) < 1e-10 and np.max(np.abs(st.q)) < 1e-10


def test_inactive_bounds_match_baseline():
    pr = small_problem(f=lambda x, y: 1.0 + 0 * x, g=lambda x, y: 0 * x, bounds=Bounds(-1e6, 1e6))
    mesh = unit_square_triangles(2)
    cfg = FospgConfig(p=0, alpha=AlphaSchedule.geometric(1.0, 4.0), tol=1e-300, max_iter=10)
    st, rep = fospg_solve(pr, mesh, cfg)
    assert st.alpha_sum >= 1e6
    q, u, uhat = baseline_mixed_solve(pr, mesh, 0)
    assert np.max(np.abs(st.u - u)) < 1e-8
    assert np.max(np.abs(st.q - q)) < 1e-8


def test_report_totals_and_dict():
    pr = small_problem()
    st, rep = fospg_solve(pr, unit_square_triangles(2), FospgConfig(p=1, alpha=pr.alpha, tol=1e-8))
    d = rep.to_dict()
    assert d["totals"]["iterations"] == len(rep.steps) == st.k
    assert d["totals"]["linear_solves"] == sum(s["linear_solves"] for s in rep.steps)
    assert d["totals"]["alpha_sum"] == pytest.approx(st.alpha_sum)
    assert all(0 < s["min_U"] and s["max_U"] < 1 for s in rep.steps)


def test_energy_nonincreasing_homogeneous_g():
    pr = small_problem(f=lambda x, y: 4.0 + 0 * x, g=lambda x, y: 0 * x, bounds=Bounds(0.0, np.inf), operator="exp")
    st, rep = fospg_solve(pr, unit_square_triangles(4), FospgConfig(p=1, alpha=AlphaSchedule.geometric(1.0, 2.0), tol=1e-9))
    e = [s["energy"] for s in rep.steps]
    assert all(b <= a + 1e-8 for a, b in zip(e[:-1], e[1:]))


def test_cell_averages_follow_latent_average():
    pr = small_problem()
    disc = Discretization(pr, unit_square_triangles(4), 2, eps2=0.1)
    st, rep = fospg_solve(pr, disc.mesh, FospgConfig(p=2, alpha=pr.alpha, eps2=0.1), disc=disc)
    assert rep.average_property
    avg_u = cell_averages(disc, st.u)
    avg_U = disc.nonlinear_term(st.psi).sum(axis=1) / disc.spaces.areas
    assert np.max(np.abs(avg_u - avg_U)) < 1e-12
    assert np.all((avg_u > 0) & (avg_u < 1))
    _, rep1 = fospg_solve(pr, disc.mesh, FospgConfig(p=2, alpha=pr.alpha, eps1=0.1, max_iter=2))
    assert not rep1.average_property


def test_multiplier_recovery():
    pr = small_problem()
    disc = Discretization(pr, perturbed(unit_square_triangles(3), seed=4), 1)
    st, _ = fospg_solve(pr, disc.mesh, FospgConfig(p=1, alpha=pr.alpha, tol=1e-10), disc=disc)
    rec = recover_multipliers(disc, st.q, st.u)
    inner = disc.mesh.interior_facets
    assert np.max(np.abs(rec[inner] - st.uhat[inner])) < 1e-8


@pytest.mark.parametrize(
    "make_mesh, p",
    [(unit_square_triangles, 0), (unit_square_rectangles, 1), (unit_square_rectangles, 2)],
)
def test_bounds_preserved_at_quadrature_points(make_mesh, p):
    pr = small_problem(f=lambda x, y: 12.0 * np.sin(6 * x) + 0 * y, make_mesh=make_mesh)
    disc = Discretization(pr, make_mesh(4), p)
    seen = []

    def monitor(state, d):
        vals = d.latent_values(state.u)
        seen.append((vals.min(), vals.max(), np.max(np.abs(vals - d.upsilon(state.psi)))))
        return {}

    _, rep = fospg_solve(pr, disc.mesh, FospgConfig(p=p, alpha=pr.alpha, max_iter=15), monitor=monitor, disc=disc)
    assert rep.newton_failures == 0
    seen = np.array(seen)
    assert 0.0 < seen[:, 0].min() and seen[:, 1].max() < 1.0
    # u_h agrees with U(psi_h) at the quadrature points
    assert seen[:, 2].max() < 1e-10


def test_boundary_data_outside_bounds_rejected():
    pr = small_problem(g=lambda x, y: 2.0 + 0 * x)
    with pytest.raises(ConfigError):
        fospg_solve(pr, unit_square_triangles(2), FospgConfig(p=0))


# -- predictor ------------------------------------------------------------------------------


def test_predictor_shifts_only_settled_coefficients():
    z = np.zeros((2, 1))
    st = ProximalState(z, z, np.zeros((1, 1)), np.array([[1.0], [2.0]]))
    mult = np.array([[1.0], [1.0]])
    prev = np.array([[0.95], [0.2]])
    out = _predicted_start(st, 10.0, mult, prev)
    assert np.allclose(out.psi, [[11.0], [2.0]])
    assert _predicted_start(st, 10.0, mult, np.zeros((2, 1))) is st


# -- baseline --------------------------------------------------------------------------------


def test_baseline_zero_and_conservation():
    pr = small_problem(f=lambda x, y: 0 * x, g=lambda x, y: 0 * x)
    q, u, uhat = baseline_mixed_solve(pr, unit_square_triangles(3), 1)
    assert np.max(np.abs(u)) < 1e-14 and np.max(np.abs(q)) < 1e-14
    pr = small_problem()
    for p in (0, 1, 2):
        disc = Discretization(pr, perturbed(unit_square_triangles(3), seed=p), p, operator=None)
        q, u, uhat = baseline_mixed_solve(pr, disc.mesh, p, disc=disc)
        assert np.max(np.abs(disc.mass_defect(q))) < 1e-12 * np.max(np.abs(disc.F))


def test_baseline_integral_converges():
    u_int = 4 / math.pi**2
    pr = small_problem(
        f=lambda x, y: 2 * math.pi**2 * np.sin(math.pi * x) * np.sin(math.pi * y),
        g=lambda x, y: 0 * x,
        diffusion=__import__("fospg").fem.DiffusionTensor.identity(),
    )
    errs = []
    for n in (4, 8, 16):
        mesh = unit_square_triangles(n)
        q, u, _ = baseline_mixed_solve(pr, mesh, 0)
        errs.append(abs(np.sum(u[:, 0] * mesh.areas()) - u_int))
    assert errs[1] < 0.6 * errs[0] and errs[2] < 0.6 * errs[1]


# -- stabilization ----------------------------------------------------------------------------


def test_stabilization_terms():
    disc = Discretization(small_problem(), unit_square_triangles(2), 1)
    B, h = disc.blocks, disc.spaces.h
    psi = np.random.default_rng(0).standard_normal((disc.mesh.num_elements, disc.spaces.nu))
    assert np.all(stabilization_terms(psi, 0.0, 0.0, 1, h, B.Mu, B.Kgrad) == 0.0)
    d0 = Discretization(small_problem(), unit_square_triangles(2), 0)
    c = np.ones((d0.mesh.num_elements, 1))
    assert np.all(stabilization_terms(c, 0.0, 1.0, 0, d0.spaces.h, d0.blocks.Mu, d0.blocks.Kgrad) == 0.0)


def test_unstabilized_matches_zero_eps_bitwise():
    pr = small_problem()
    mesh = unit_square_triangles(2)
    a, _ = fospg_solve(pr, mesh, FospgConfig(p=1, alpha=pr.alpha, max_iter=3))
    b, _ = fospg_solve(pr, mesh, FospgConfig(p=1, alpha=pr.alpha, max_iter=3, eps1=0.0, eps2=0.0))
    assert np.array_equal(a.psi, b.psi)


# -- configuration ------------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [dict(tol=0.0), dict(newton="quadratic"), dict(eps1=-1.0), dict(max_iter=0), dict(newton_tol=0.0)],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        FospgConfig(**kwargs).validate()


def test_alpha_schedules():
    assert AlphaSchedule.parse("const:1")(7) == 1.0
    s = AlphaSchedule.parse("geom:1e-4,1.5")
    assert s(2) == pytest.approx(1e-4 * 2.25)
    assert AlphaSchedule.parse("geom:1,4")(3) == 64.0
    assert AlphaSchedule.geometric(1.0, 4.0)(10_000) == 1e30
    assert AlphaSchedule.parse(s.describe()) == s
    for bad in ("const:-1", "geom:1", "linear:2", "const:x"):
        with pytest.raises(ConfigError):
            AlphaSchedule.parse(bad)


def test_parse_newton():
    assert FospgConfig.parse_newton("fixed:1e-6") == ("fixed", 1e-6)
    assert FospgConfig.parse_newton("adaptive")[0] == "adaptive"
    with pytest.raises(ConfigError):
        FospgConfig.parse_newton("fixed:abc")


# -- linear algebra ------------------------------------------------------------------------------


def test_spd_solve_examples():
    b = np.arange(1.0, 6.0)
    assert np.allclose(spd_solve(sp.identity(5, format="csr"), b), b)
    n = 10
    K = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")
    e1 = np.eye(n)[0]
    assert np.max(np.abs(spd_solve(K, e1) - np.linalg.solve(K.toarray(), e1))) < 1e-13
    rng = np.random.default_rng(0)
    A = rng.standard_normal((50, 50))
    K = sp.csr_matrix(A.T @ A + np.eye(50))
    b = rng.standard_normal(50)
    assert np.linalg.norm(K @ spd_solve(K, b) - b) < 1e-12 * np.linalg.norm(b)


def test_spd_solve_rejects_indefinite():
    with pytest.raises(AssemblyError):
        spd_solve(sp.diags([1.0, -1.0, 2.0], format="csr"), np.ones(3))


def test_stabilization_bounds_latent_growth(quiet):
    # punctured domain, p = 2: compare after the same number of proximal steps
    from fospg.problems import get_problem

    pr = get_problem("punctured")
    mesh = pr.mesh(9)
    plain, _ = fospg_solve(pr, mesh, FospgConfig(p=2, alpha=pr.alpha, max_iter=30))
    stab, rep = fospg_solve(pr, mesh, FospgConfig(p=2, alpha=pr.alpha, eps1=0.1, eps2=0.1, max_iter=30))
    assert rep.converged and rep.newton_failures == 0
    assert np.abs(plain.psi).max() >= 1e4 * np.abs(stab.psi).max()
