"""Hybridized first-order system proximal Galerkin solver for bound-constrained elliptic problems."""

from .latent import Bounds, LatentOperator, discrete_bregman
from .mesh import Mesh, polygonal_disk, punctured_square, unit_square_rectangles, unit_square_triangles
from .problems import REGISTRY, ProblemSpec, get_problem
from .solver import (
    AlphaSchedule,
    ConfigError,
    Discretization,
    FospgConfig,
    ProximalState,
    RunReport,
    SolverError,
    baseline_mixed_solve,
    fospg_solve,
)

__version__ = "0.1.0"
