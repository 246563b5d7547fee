"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
are produced; they are repeated in the terminal summary.
"""

import time
import warnings

import pytest

import test_fem
import test_latent
import test_solver
from conftest import SMALL_MESHES, record_criterion
from fospg import analysis as an
from fospg.cli import RunConfig, convergence_records, iteration_rows, oracle_problem, run_oracle_check
from fospg.latent import KINDS
from fospg.mesh import unit_square_rectangles, unit_square_triangles
from fospg.solver import baseline_mixed_solve, fospg_solve

ANISOTROPIC = ("oblique-flow", "vertical-faults", "punctured")


def run_checks(checks):
    """Call each ``(label, fn)``; return the labels whose assertions failed."""
    failed = []
    for label, fn in checks:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fn()
        except AssertionError:
            failed.append(label)
    return failed


def rate_line(records):
    r = records[-1]
    return f"rates u {r.rate_u:.2f} latent {r.rate_latent:.2f} flux {r.rate_flux:.2f}"


@pytest.fixture(scope="module")
def anisotropic_runs():
    """FOSPG at p = 2 and tol 1e-10 on the default mesh of each anisotropic benchmark."""
    runs = {}
    for name in ANISOTROPIC:
        cfg = RunConfig(problem=name, tol=1e-10)
        pr = cfg.problem_spec()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            state, report = fospg_solve(pr, pr.mesh(), cfg.solver_config(2))
        runs[name] = (report.disc, state, report)
    return runs


@pytest.fixture(scope="module")
def spherical_p1_fixed():
    return convergence_records(RunConfig(problem="spherical", refinements=4), 1)


# -- 1 ------------------------------------------------------------------------------------


def test_criterion_01_biactive_rates():
    t0 = time.perf_counter()
    ok, parts = True, []
    for p in (0, 1, 2):
        recs = convergence_records(RunConfig(problem="biactive", refinements=4), p)
        r = recs[-1]
        good = all(abs(x - (p + 1)) <= 0.25 for x in (r.rate_u, r.rate_latent, r.rate_flux))
        ok &= good
        parts.append(f"p={p} {rate_line(recs)}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    record_criterion(1, ok, "; ".join(parts) + f"; {elapsed:.0f} s")
    assert ok


# -- 2 ------------------------------------------------------------------------------------


def test_criterion_02_spherical_rates(spherical_p1_fixed):
    r0 = convergence_records(RunConfig(problem="spherical", refinements=4), 0)[-1]
    r1 = spherical_p1_fixed[-1]
    ok0 = all(abs(x - 1.0) <= 0.25 for x in (r0.rate_u, r0.rate_latent, r0.rate_flux))
    ok1 = abs(r1.rate_u - 2.0) <= 0.3 and abs(r1.rate_latent - 2.0) <= 0.3 and abs(r1.rate_flux - 1.5) <= 0.3
    detail = (
        f"p=0 u {r0.rate_u:.2f} latent {r0.rate_latent:.2f} flux {r0.rate_flux:.2f}; "
        f"p=1 u {r1.rate_u:.2f} latent {r1.rate_latent:.2f} flux {r1.rate_flux:.2f}"
    )
    record_criterion(2, ok0 and ok1, detail)
    assert ok0 and ok1


# -- 3 ------------------------------------------------------------------------------------


def test_criterion_03_dmp_everywhere(anisotropic_runs):
    ok, parts = True, []
    for name, (disc, state, report) in anisotropic_runs.items():
        scan = an.dmp_scan(disc, state.psi, latent=True)
        good = report.converged and scan.min >= 0.0 and scan.max <= 1.0 and not scan.violations
        ok &= good
        parts.append(f"{name} [{scan.min:.2e}, {scan.max:.6f}]")
    record_criterion(3, ok, "; ".join(parts))
    assert ok


# -- 4 ------------------------------------------------------------------------------------


def test_criterion_04_baseline_violation():
    cfg = RunConfig(problem="punctured")
    pr = cfg.problem_spec()
    mesh = pr.mesh(45)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        state, report = fospg_solve(pr, mesh, cfg.solver_config(0))
    disc = report.disc
    _, u, _ = baseline_mixed_solve(pr, mesh, 0, disc=disc)
    base = an.dmp_scan(disc, u)
    ours = an.dmp_scan(disc, state.psi, latent=True)
    ok = base.min < -0.05 and base.max > 1.0 and report.converged and 0.0 <= ours.min <= ours.max <= 1.0
    detail = f"h={mesh.h:.3f} mixed [{base.min:.3f}, {base.max:.4f}]; FOSPG [{ours.min:.2e}, {ours.max:.4f}]"
    record_criterion(4, ok, detail)
    assert ok


# -- 5 ------------------------------------------------------------------------------------


def test_criterion_05_local_mass_conservation(anisotropic_runs):
    ok, parts = True, []
    for name, (disc, state, _) in anisotropic_runs.items():
        _, xi = an.mass_indicator(disc, state.q)
        ok &= xi < 1e-10
        parts.append(f"{name} {xi:.1e}")
    cfg = RunConfig(problem="spherical", tol=1e-10)
    pr = cfg.problem_spec()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        state, report = fospg_solve(pr, pr.mesh(3), cfg.solver_config(1))
    disc = report.disc
    xi, _ = an.mass_indicator(disc, state.q)
    free = an.contact_free(disc, state.u, cfg.tol)
    ok &= bool(free.any()) and xi[free].max() < 1e-10
    parts.append(f"spherical contact-free {xi[free].max():.1e} ({free.sum()}/{free.size} cells), contact {xi.max():.1e}")
    record_criterion(5, ok, "; ".join(parts))
    assert ok


# -- 6 ------------------------------------------------------------------------------------


def test_criterion_06_mesh_independence(spherical_p1_fixed):
    fixed_its = [r.extra["iterations"] for r in spherical_p1_fixed]
    fixed_ls = sum(r.extra["linear_solves"] for r in spherical_p1_fixed)
    _, totals = iteration_rows(RunConfig(problem="spherical", refinements=4), 1, "adaptive")
    adaptive_ls = sum(t["linear_solves"] for t in totals)
    in_range = all(9 <= k <= 16 for k in fixed_its)
    steady = all(abs(a - b) <= 3 for a, b in zip(fixed_its[:-1], fixed_its[1:]))
    cheap = adaptive_ls <= 0.6 * fixed_ls
    ok = in_range and steady and cheap
    detail = (
        f"outer iterations {fixed_its} (range ok: {in_range}, steps ok: {steady}); "
        f"linear solves adaptive/fixed {adaptive_ls}/{fixed_ls} = {adaptive_ls / fixed_ls:.2f}"
    )
    record_criterion(6, ok, detail)
    assert ok


# -- 7 ------------------------------------------------------------------------------------


def test_criterion_07_oracle_equivalence():
    pr = oracle_problem()
    mesh = unit_square_triangles(2)
    assert mesh.num_elements == 8
    res = run_oracle_check(mesh, pr, pr.alpha, target_sum=1e6, gtol=1e-10)
    ok = res["oracle_converged"] and res["alpha_sum"] >= 1e6 and res["final_error"] < 1e-4 and res["max_ratio"] <= 10
    detail = (
        f"sum(alpha) {res['alpha_sum']:.2e}, error {res['final_error']:.1e}, "
        f"max error^2 sum(alpha)/D_h {res['max_ratio']:.2f}, oracle KKT {res['kkt']:.1e}"
    )
    record_criterion(7, ok, detail)
    assert ok


# -- 8 to 11: the module property suites, run over every parameter set ---------------------


def test_criterion_08_condensation():
    checks = [
        (f"{m} p={p}", lambda m=m, p=p: test_solver.test_condensed_matches_monolithic(m, p))
        for m in sorted(SMALL_MESHES)
        for p in (0, 1, 2)
    ]
    checks.append(("saturated", test_solver.test_condensation_survives_saturated_latent))
    failed = run_checks(checks)
    record_criterion(8, not failed, f"{len(checks) - len(failed)}/{len(checks)} checks" + (f", failed {failed}" if failed else ""))
    assert not failed


def test_criterion_09_jacobian():
    checks = [(f"seed {s}", lambda s=s: test_solver.test_jacobian_matches_finite_differences(s)) for s in range(5)]
    failed = run_checks(checks)
    record_criterion(9, not failed, f"{len(checks) - len(failed)}/{len(checks)} random states" + (f", failed {failed}" if failed else ""))
    assert not failed


def test_criterion_10_latent_duality():
    checks = []
    for kind in KINDS:
        checks += [
            (f"roundtrip {kind}", lambda k=kind: test_latent.test_roundtrip(k)),
            (f"derivative {kind}", lambda k=kind: test_latent.test_derivative_matches_finite_differences(k)),
            (f"conjugate {kind}", lambda k=kind: test_latent.test_conjugate_derivative_is_upsilon(k)),
            (f"extremes {kind}", lambda k=kind: test_latent.test_extreme_arguments_finite_and_in_range(k)),
        ]
    checks += [("bregman example", test_latent.test_bregman_example), ("bregman property", test_latent.test_bregman_nonnegative)]
    failed = run_checks(checks)
    record_criterion(10, not failed, f"{len(checks) - len(failed)}/{len(checks)} checks" + (f", failed {failed}" if failed else ""))
    assert not failed


def test_criterion_11_property_suites():
    checks = [
        (f"norm equivalence {make.__name__} p={p}", lambda make=make, p=p: test_fem.test_norm_equivalence_ratio_stable(make, p))
        for make in (unit_square_triangles, unit_square_rectangles)
        for p in (0, 1)
    ]
    checks += [
        (f"bounds {make.__name__} p={p}", lambda make=make, p=p: test_solver.test_bounds_preserved_at_quadrature_points(make, p))
        for make, p in ((unit_square_triangles, 0), (unit_square_rectangles, 1), (unit_square_rectangles, 2))
    ]
    checks.append(("cell averages", test_solver.test_cell_averages_follow_latent_average))
    failed = run_checks(checks)
    record_criterion(11, not failed, f"{len(checks) - len(failed)}/{len(checks)} checks" + (f", failed {failed}" if failed else ""))
    assert not failed
