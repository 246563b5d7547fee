"""Finite element building blocks: quadrature, reference bases, spaces and assembly."""

from .assembly import LocalBlocks, assemble_local, flux_mass, latent_rule, load_vector, scalar_mass
from .operators import (
    Lifting,
    dg_norm,
    facet_polynomial,
    l2_project_element,
    l2_project_facet,
    lifting,
    lifting_boundary,
    project_values,
    triple_norm,
)
from .quadrature import (
    QuadratureRule,
    element_rule,
    gauss_legendre_1d,
    rule_triangle,
    tensor_rule_rect,
    vertex_augmented_triangle,
)
from .reference import rt_basis, scalar_basis
from .spaces import DiffusionTensor, Spaces


def eval_scalar_basis(kind, p, ref_points):
    """Reference values (n, nu) and gradients (n, nu, 2) of the nodal basis."""
    return scalar_basis(kind, p).eval(ref_points)


def eval_rt_basis(kind, p, ref_points):
    """Reference values (n, nq, 2) and divergences (n, nq) of the RT_p basis."""
    return rt_basis(kind, p).eval(ref_points)
