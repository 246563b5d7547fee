import warnings

import numpy as np
import pytest

from fospg.fem import DiffusionTensor
from fospg.latent import Bounds
from fospg.mesh import Mesh, polygonal_disk, unit_square_rectangles, unit_square_triangles
from fospg.problems import ProblemSpec
from fospg.solver import AlphaSchedule


def perturbed(mesh, seed=0, amp=0.15):
    """Move interior vertices randomly by up to ``amp`` times the local spacing."""
    rng = np.random.default_rng(seed)
    v = mesh.vertices.copy()
    bnd = np.unique(mesh.facets[mesh.boundary_facets])
    interior = np.setdiff1d(np.arange(len(v)), bnd)
    v[interior] += amp * mesh.h * rng.uniform(-1, 1, (len(interior), 2))
    return Mesh(v, mesh.elements, mesh.kind, regions=mesh.regions)


def small_problem(
    f=lambda x, y: 2.0 + np.sin(3 * x) * np.cos(2 * y),
    g=lambda x, y: 0.25 + 0.0 * x * y,
    bounds=Bounds(0.0, 1.0),
    operator="fermi-dirac",
    diffusion=None,
    make_mesh=unit_square_triangles,
):
    return ProblemSpec(
        name="small",
        make_mesh=make_mesh,
        mesh_param=2,
        refine_param=lambda n, k: n * 2**k,
        diffusion=diffusion or DiffusionTensor.rotated(lambda x, y: 0.3 + x * y, 2.0, 0.5),
        f=f,
        g=g,
        bounds=bounds,
        operator=operator,
        alpha=AlphaSchedule.geometric(1.0, 2.0),
    )


SMALL_MESHES = {
    "triangles": lambda: perturbed(unit_square_triangles(2), seed=1),
    "rectangles": lambda: unit_square_rectangles(2),
    "disk": lambda: perturbed(polygonal_disk(0), seed=2, amp=0.0),
}


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


# -- acceptance summary ------------------------------------------------------------------

ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
