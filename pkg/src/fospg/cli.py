"""Command-line experiment runner: field output, convergence tables, bound tables, iteration tables.

Configuration comes from an optional JSON file; command-line flags override
its keys one-to-one.  Exit codes: 0 success, 2 configuration error, 3 solver
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis as an
from .fem.operators import project_values
from .fem.quadrature import element_rule
from .fem.reference import reference_element
from .fem.spaces import DiffusionTensor
from .latent import KINDS as OPERATOR_KINDS
from .latent import Bounds, BoundsError, LatentOperator
from .mesh import MeshError, unit_square_triangles
from .oracle import BoxVI, solve_vi_projected_gradient
from .problems import REGISTRY, ProblemSpec, get_problem
from .solver import (
    AlphaSchedule,
    ConfigError,
    Discretization,
    FospgConfig,
    SolverError,
    baseline_mixed_solve,
    fospg_solve,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
CONVERGENCE_HEADER = ["h", "err_u", "rate_u", "err_latent", "rate_latent", "err_flux", "rate_flux"]
TABLE1_HEADER = ["h", "p", "max_mixed", "min_mixed", "max_U", "min_U", "mass_mixed", "mass_fospg"]
ITERATIONS_HEADER = ["level", "h", "k", "linear_solves", "err_flux", "err_latent"]
TABLE1_EPS = (0.1, 0.1)  # stabilization used for every degree in the bound table
NEWTON_SWEEP = ("single", "fixed:1e-10", "adaptive")
EMIT_FLAGS = ("csv", "vtk", "report")


class SolveFailed(RuntimeError):
    pass


@dataclass
class RunConfig:
    problem: str = "biactive"
    p: Optional[int] = None
    n: Optional[int] = None  # mesh parameter (n_refine for the disk)
    refinements: int = 4
    operator: Optional[str] = None
    eps1: Optional[float] = None
    eps2: Optional[float] = None
    alpha: Optional[str] = None
    tol: Optional[float] = None
    newton: Optional[str] = None
    max_iter: int = 300
    out: str = "out"
    emit: list = field(default_factory=lambda: list(EMIT_FLAGS))
    seed: Optional[int] = None

    def validate(self):
        if self.problem not in REGISTRY:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {', '.join(REGISTRY)}")
        if self.p is not None and self.p not in (0, 1, 2, 3):
            raise ConfigError("p must be 0, 1, 2 or 3")
        if self.n is not None and self.n < 1:
            raise ConfigError("n must be positive")
        if self.refinements < 1:
            raise ConfigError("refinements must be at least 1")
        if self.operator is not None and self.operator not in OPERATOR_KINDS:
            raise ConfigError(f"unknown operator {self.operator!r}; choose from {', '.join(OPERATOR_KINDS)}")
        for name in ("eps1", "eps2"):
            value = getattr(self, name)
            if value is not None and not (value >= 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be finite and nonnegative")
        if self.alpha is not None:
            AlphaSchedule.parse(self.alpha)
        if self.newton is not None:
            FospgConfig.parse_newton(self.newton)
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be positive")
        bad = set(self.emit) - set(EMIT_FLAGS)
        if bad:
            raise ConfigError(f"unknown emit flags {sorted(bad)}")
        return self

    # -- derived settings -------------------------------------------------------------

    def problem_spec(self) -> ProblemSpec:
        return get_problem(self.problem)

    def solver_config(self, p, newton=None) -> FospgConfig:
        pr = self.problem_spec()
        e1, e2 = pr.eps_for(p)
        mode, ntol = FospgConfig.parse_newton(newton or self.newton or "fixed:1e-10")
        return FospgConfig(
            p=p,
            operator=self.operator,
            alpha=AlphaSchedule.parse(self.alpha) if self.alpha else pr.alpha,
            tol=self.tol if self.tol is not None else pr.tol,
            max_iter=self.max_iter,
            newton=mode,
            newton_tol=ntol,
            eps1=self.eps1 if self.eps1 is not None else e1,
            eps2=self.eps2 if self.eps2 is not None else e2,
        ).validate()

    def meshes(self):
        pr = self.problem_spec()
        return pr.mesh_sequence(self.refinements, self.n)


def load_json_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    return data


def build_config(args) -> RunConfig:
    data = load_json_config(args.config) if args.config else {}
    for key in ("problem", "p", "n", "refinements", "operator", "eps1", "eps2", "alpha", "tol", "newton", "out", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if getattr(args, "max_iter", None) is not None:
        data["max_iter"] = args.max_iter
    try:
        return RunConfig(**data).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# -- output helpers ------------------------------------------------------------------------


def fmt(x):
    """Fixed-width scientific text for CSV cells; an undefined rate is left empty."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10e}"


def write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_json(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


VTK_CELL_TYPES = {"triangle": 5, "rectangle": 9}


def write_vtk(path, mesh, cell_data: dict, point_data: dict = None, title="fospg"):
    """Legacy ASCII UNSTRUCTURED_GRID; arrays of shape (ne,) / (nv,) are scalars, (.., 2) vectors."""
    path.parent.mkdir(parents=True, exist_ok=True)
    ne, nv = mesh.num_elements, mesh.num_vertices
    k = mesh.elements.shape[1]
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {nv} double")
    lines += [f"{x:.16e} {y:.16e} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {ne} {ne * (k + 1)}")
    lines += [f"{k} " + " ".join(str(int(v)) for v in cell) for cell in mesh.elements]
    lines.append(f"CELL_TYPES {ne}")
    lines += [str(VTK_CELL_TYPES[mesh.kind])] * ne
    for section, count, data in (("CELL_DATA", ne, cell_data), ("POINT_DATA", nv, point_data or {})):
        if not data:
            continue
        lines.append(f"{section} {count}")
        for name, values in data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 2:
                lines.append(f"VECTORS {name} double")
                lines += [f"{a:.16e} {b:.16e} 0" for a, b in values]
            else:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.16e}" for v in values]
    path.write_text("\n".join(lines) + "\n")
    return path


def vertex_average(disc, coeffs):
    """Element traces at the vertices averaged over the elements sharing each vertex."""
    S, mesh = disc.spaces, disc.mesh
    ref = reference_element(S.kind).vertices
    vals = S.scalar_values(coeffs, ref)  # (ne, k)
    total = np.zeros(mesh.num_vertices)
    count = np.zeros(mesh.num_vertices)
    np.add.at(total, mesh.elements.ravel(), vals.ravel())
    np.add.at(count, mesh.elements.ravel(), 1.0)
    return total / np.maximum(count, 1.0)


def field_output(disc, state, upsi_op):
    """Cell data (averages, flux at the centroid, mass indicator) and vertex data for p >= 1."""
    S = disc.spaces
    mesh = disc.mesh
    centre = np.mean(reference_element(S.kind).vertices, axis=0)
    xc = S.map_points(centre[None, :])
    psi_c = S.scalar_values(state.psi, centre[None, :])
    xi, _ = an.mass_indicator(disc, state.q)
    cells = {
        "u": an.cell_averages(disc, state.u),
        "psi": an.cell_averages(disc, state.psi),
        "U_psi": upsi_op.at(xc).upsilon(psi_c)[:, 0],
        "xi": xi,
        "q": S.flux_values(state.q, centre[None, :])[:, 0, :],
    }
    points = None
    if disc.p >= 1:
        U_coeffs = l2_upsilon(disc, state.psi, upsi_op)
        points = {
            "u": vertex_average(disc, state.u),
            "psi": vertex_average(disc, state.psi),
            "U_psi": vertex_average(disc, U_coeffs),
        }
    return cells, points, mesh


def l2_upsilon(disc, psi, op):
    """Broken projection of ``U(psi_h)`` used for vertex sampling of the latent field."""
    S = disc.spaces
    rule = element_rule(S.kind, 2 * S.p + 2)
    x = S.map_points(rule.points)
    vals = op.at(x).upsilon(S.scalar_values(psi, rule.points))
    return project_values(S, vals, rule)


# -- solving --------------------------------------------------------------------------------


def solve(cfg: RunConfig, mesh, p, newton=None, monitor=None):
    pr = cfg.problem_spec()
    config = cfg.solver_config(p, newton)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        state, report = fospg_solve(pr, mesh, config, monitor=monitor)
    return state, report


def exact_errors(disc, state, pr: ProblemSpec):
    S = disc.spaces
    deg = 2 * disc.p + 6
    op = LatentOperator(disc.operator_kind, pr.bounds)
    return (
        an.l2_error(S, state.u, pr.exact_u, deg),
        an.latent_l2_error(S, state.psi, op, pr.exact_u, deg),
        an.flux_l2_error(S, state.q, pr.exact_q, deg, diffusion=pr.diffusion),
    )


def summary(disc, state, report, pr):
    scan = an.dmp_scan(disc, state.psi, latent=True)
    out = {
        "elements": disc.mesh.num_elements,
        "h": float(disc.mesh.h),
        "min_U": scan.min,
        "max_U": scan.max,
        "mass_defect_max": an.mass_indicator(disc, state.q)[1],
        "converged": report.converged,
    }
    if pr.has_exact:
        eu, el, eq = exact_errors(disc, state, pr)
        out.update(err_u=eu, err_latent=el, err_flux=eq)
    return out


# -- commands -------------------------------------------------------------------------------


def cmd_run(cfg: RunConfig):
    pr = cfg.problem_spec()
    p = 1 if cfg.p is None else cfg.p
    mesh = pr.mesh(cfg.n)
    t0 = time.perf_counter()
    state, report = solve(cfg, mesh, p)
    disc = report.disc
    out = Path(cfg.out)
    stem = f"{pr.name}_p{p}_n{cfg.n if cfg.n is not None else pr.mesh_param}"
    files = []
    if "vtk" in cfg.emit:
        op = LatentOperator(disc.operator_kind, pr.bounds)
        cells, points, _ = field_output(disc, state, op)
        note = "cell data: averages" + ("; point data: element traces averaged at vertices" if points else "")
        files.append(write_vtk(out / f"{stem}.vtk", mesh, cells, points, title=f"fospg {stem} ({note})"))
    if "report" in cfg.emit:
        data = report.to_dict()
        data["summary"] = summary(disc, state, report, pr)
        data["summary"]["elapsed_seconds"] = time.perf_counter() - t0
        files.append(write_json(out / f"{stem}_report.json", data))
    for f in files:
        print(f"wrote {f}")
    s = summary(disc, state, report, pr)
    print(
        f"{pr.name} p={p} elements={s['elements']} iterations={report.total_iterations} "
        f"linear_solves={report.total_linear_solves} U in [{s['min_U']:.3e}, {s['max_U']:.3e}] "
        f"mass={s['mass_defect_max']:.2e}"
    )
    if not report.converged:
        raise SolveFailed(f"outer loop did not reach tol within {cfg.max_iter} iterations")
    return files


def convergence_records(cfg: RunConfig, p):
    pr = cfg.problem_spec()
    if not pr.has_exact:
        raise ConfigError(f"problem {pr.name!r} has no exact solution")
    records = []
    for mesh in cfg.meshes():
        state, report = solve(cfg, mesh, p)
        if not report.converged:
            raise SolveFailed(f"no convergence on mesh with {mesh.num_elements} elements")
        disc = report.disc
        eu, el, eq = exact_errors(disc, state, pr)
        rec = an.ErrorRecord(float(mesh.h), int(disc.spaces.num_facet_dofs), eu, el, eq)
        rec.extra = {"iterations": report.total_iterations, "linear_solves": report.total_linear_solves}
        records.append(rec)
    return an.attach_rates(records)


def cmd_convergence(cfg: RunConfig):
    pr = cfg.problem_spec()
    p = 1 if cfg.p is None else cfg.p
    records = convergence_records(cfg, p)
    rows = [[r.h, r.err_u, r.rate_u, r.err_latent, r.rate_latent, r.err_flux, r.rate_flux] for r in records]
    path = write_csv(Path(cfg.out) / f"convergence_{pr.name}_p{p}.csv", CONVERGENCE_HEADER, rows)
    print(f"wrote {path}")
    for r in records:
        print(
            f"h={r.h:.4f} err_u={r.err_u:.3e} ({r.rate_u:.2f}) err_latent={r.err_latent:.3e} ({r.rate_latent:.2f}) "
            f"err_flux={r.err_flux:.3e} ({r.rate_flux:.2f})"
        )
    return records


def table1_rows(cfg: RunConfig, degrees):
    pr = cfg.problem_spec()
    rows = []
    for mesh in cfg.meshes():
        for p in degrees:
            state, report = solve(cfg, mesh, p)
            if not report.converged:
                raise SolveFailed(f"no convergence for p={p} on {mesh.num_elements} elements")
            disc = report.disc
            q, u, _ = baseline_mixed_solve(pr, mesh, p, disc=disc)
            base = an.dmp_scan(disc, u)
            latent = an.dmp_scan(disc, state.psi, latent=True)
            rows.append(
                [
                    float(mesh.h),
                    p,
                    base.max,
                    base.min,
                    latent.max,
                    latent.min,
                    an.mass_indicator(disc, q)[1],
                    an.mass_indicator(disc, state.q)[1],
                ]
            )
    return rows


def cmd_table1(cfg: RunConfig):
    pr = cfg.problem_spec()
    degrees = (0, 1, 2) if cfg.p is None else (cfg.p,)
    if cfg.eps1 is None and cfg.eps2 is None:
        cfg = replace(cfg, eps1=TABLE1_EPS[0], eps2=TABLE1_EPS[1])
    rows = table1_rows(cfg, degrees)
    path = write_csv(Path(cfg.out) / f"table1_{pr.name}.csv", TABLE1_HEADER, rows)
    print(f"wrote {path}")
    for r in rows:
        print(
            f"h={r[0]:.4f} p={r[1]} mixed [{r[3]:.3e}, {r[2]:.3e}] U(psi) [{r[5]:.3e}, {r[4]:.3e}] "
            f"mass {r[6]:.1e} / {r[7]:.1e}"
        )
    return rows


def iteration_rows(cfg: RunConfig, p, newton):
    pr = cfg.problem_spec()
    if not pr.has_exact:
        raise ConfigError(f"problem {pr.name!r} has no exact solution")
    rows, totals = [], []
    for level, mesh in enumerate(cfg.meshes()):
        op = LatentOperator(cfg.operator or pr.operator, pr.bounds)

        def monitor(state, disc):
            S = disc.spaces
            deg = 2 * disc.p + 6
            return {
                "err_flux": an.flux_l2_error(S, state.q, pr.exact_q, deg, diffusion=pr.diffusion),
                "err_latent": an.latent_l2_error(S, state.psi, op, pr.exact_u, deg),
            }

        state, report = solve(cfg, mesh, p, newton=newton, monitor=monitor)
        if not report.converged:
            raise SolveFailed(f"no convergence with newton={newton} on {mesh.num_elements} elements")
        for s in report.steps:
            rows.append([level, float(mesh.h), s["k"], s["linear_solves"], s["err_flux"], s["err_latent"]])
        totals.append({"level": level, "iterations": report.total_iterations, "linear_solves": report.total_linear_solves})
    return rows, totals


def cmd_iterations(cfg: RunConfig):
    pr = cfg.problem_spec()
    p = 1 if cfg.p is None else cfg.p
    modes = NEWTON_SWEEP if cfg.newton is None else (cfg.newton,)
    results = {}
    for mode in modes:
        rows, totals = iteration_rows(cfg, p, mode)
        tag = mode.replace(":", "")
        path = write_csv(Path(cfg.out) / f"iterations_{pr.name}_p{p}_{tag}.csv", ITERATIONS_HEADER, rows)
        print(f"wrote {path}")
        print(f"  {mode}: iterations {[t['iterations'] for t in totals]} linear solves {[t['linear_solves'] for t in totals]}")
        results[mode] = totals
    write_json(Path(cfg.out) / f"iterations_{pr.name}_p{p}_totals.json", results)
    return results


def oracle_problem(seed=None) -> ProblemSpec:
    """Unit square, ``g = 0``, lower bound 0; ``f = 4`` or a seeded smooth field taking both signs."""
    if seed is None:

        def f(x, y):
            return 4.0 + 0.0 * x * y

    else:
        c = np.random.default_rng(seed).uniform(-8.0, 8.0, 4)
        c[0] *= 0.25  # keep the sign change of f inside the square

        def f(x, y):
            return c[0] + c[1] * np.sin(np.pi * x) * np.cos(np.pi * y) + c[2] * x + c[3] * y

    return ProblemSpec(
        name="oracle",
        make_mesh=unit_square_triangles,
        mesh_param=2,
        refine_param=lambda n, k: n * 2**k,
        diffusion=DiffusionTensor.identity(),
        f=f,
        g=lambda x, y: 0.0 * x * y,
        bounds=Bounds(0.0, np.inf),
        operator="exp",
        alpha=AlphaSchedule.geometric(1.0, 1.5),
    )


def steps_for_sum(alpha: AlphaSchedule, target):
    """Smallest ``k`` with ``alpha_1 + ... + alpha_k >= target``."""
    total, k = 0.0, 0
    while total < target:
        k += 1
        total += alpha(k)
        if k > 100_000:
            raise ConfigError("alpha schedule does not reach the requested sum")
    return k


def run_oracle_check(mesh, pr, alpha: AlphaSchedule, target_sum=1e6, gtol=1e-10, operator="exp"):
    """FOSPG at p = 0 until ``sum(alpha) >= target_sum``, compared step by step with the oracle.

    Each step records the L2 distance to the oracle solution and the ratio
    ``(||u - u*||_DG^2 + ||A^{-1/2}(q - q*)||^2) sum(alpha) / D_h(u*, u0)``.
    """
    box = BoxVI.from_problem(pr, mesh)
    ref = solve_vi_projected_gradient(box, gtol=gtol)
    disc = Discretization(pr, mesh, 0, operator)
    u_star, q_star = ref.u[:, None], ref.q
    u0 = disc.initial_state().u
    areas = disc.spaces.areas

    def record(state, d):
        err = float(np.sqrt(np.sum(areas * (state.u[:, 0] - ref.u) ** 2)))
        _, ratio = an.bregman_monitor(d, state.u, state.q, u_star, q_star, u0, state.alpha_sum)
        return {"err_oracle": err, "bound_ratio": ratio}

    config = FospgConfig(p=0, alpha=alpha, tol=1e-300, max_iter=steps_for_sum(alpha, target_sum))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        state, report = fospg_solve(pr, mesh, config, monitor=record, disc=disc)
    steps = [
        {"k": s["k"], "alpha_sum": a, "err": s["err_oracle"], "ratio": s["bound_ratio"]}
        for s, a in zip(report.steps, np.cumsum([s["alpha"] for s in report.steps]))
    ]
    return {
        "steps": steps,
        "oracle_iterations": ref.iterations,
        "oracle_converged": ref.converged,
        "kkt": ref.kkt,
        "final_error": steps[-1]["err"],
        "alpha_sum": float(steps[-1]["alpha_sum"]),
        "max_ratio": max(s["ratio"] for s in steps),
        "d0": an.bregman_distance(disc, u_star, u0),
        "newton_failures": report.newton_failures,
        "oracle": ref,
        "state": state,
        "disc": disc,
    }


def cmd_oracle_check(cfg: RunConfig):
    pr = oracle_problem(cfg.seed)
    mesh = pr.mesh(cfg.n)
    alpha = AlphaSchedule.parse(cfg.alpha) if cfg.alpha else pr.alpha
    result = run_oracle_check(mesh, pr, alpha)
    rows = [[s["k"], s["alpha_sum"], s["err"], s["ratio"]] for s in result["steps"]]
    path = write_csv(Path(cfg.out) / "oracle_check.csv", ["k", "alpha_sum", "err_l2", "bound_ratio"], rows)
    print(f"wrote {path}")
    print(
        f"oracle: {result['oracle_iterations']} projected-gradient steps, KKT {result['kkt']:.1e}; "
        f"FOSPG error {result['final_error']:.3e} after sum(alpha) = {result['alpha_sum']:.3e}; "
        f"max bound ratio {result['max_ratio']:.3e}"
    )
    if not result["oracle_converged"]:
        raise SolveFailed("projected-gradient oracle did not converge")
    return result


# -- entry point ----------------------------------------------------------------------------


COMMANDS = {
    "run": cmd_run,
    "convergence": cmd_convergence,
    "table1": cmd_table1,
    "iterations": cmd_iterations,
    "oracle-check": cmd_oracle_check,
}


def parser():
    ap = argparse.ArgumentParser(prog="fospg", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=list(COMMANDS))
    ap.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    ap.add_argument("--problem", choices=list(REGISTRY))
    ap.add_argument("--p", type=int)
    ap.add_argument("--n", type=int, help="mesh parameter (refinement level for the disk)")
    ap.add_argument("--refinements", type=int)
    ap.add_argument("--operator", choices=list(OPERATOR_KINDS))
    ap.add_argument("--eps1", type=float)
    ap.add_argument("--eps2", type=float)
    ap.add_argument("--alpha", help="const:c or geom:a0,r")
    ap.add_argument("--tol", type=float)
    ap.add_argument("--newton", help="single, fixed:t or adaptive")
    ap.add_argument("--max-iter", dest="max_iter", type=int)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, help="seed for randomized data (oracle-check)")
    return ap


def thread_cap():
    """Validated value of ``FOSPG_THREADS`` (None when unset)."""
    raw = os.environ.get("FOSPG_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigError(f"FOSPG_THREADS must be a positive integer, got {raw!r}")
    return n


def main(argv=None):
    args = parser().parse_args(argv)
    try:
        thread_cap()
        cfg = build_config(args)
        COMMANDS[args.command](cfg)
    except (ConfigError, BoundsError, MeshError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, SolveFailed, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
