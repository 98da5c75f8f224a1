"""Mesh, angular quadrature, cross sections and SAAF/SN assembly."""

from .assembly import (
    TransportSystem, apply_A, apply_fission, apply_scattering, assemble,
    assemble_block, assemble_preconditioner, compute_scalar_flux, element_matrices,
)
from .generators import GENERATORS, gen_problem, infinite_medium, mini_lattice, pure_absorber
from .mesh import SIDES, SIDE_NORMALS, StructuredMesh
from .problem import (
    ConfigError, Material, ProblemSpec, compute_tau, load_spec, save_spec,
    spec_from_dict, spec_to_dict, stabilization_tau,
)
from .quadrature import AngularQuadrature, build_quadrature

__all__ = [
    "TransportSystem", "apply_A", "apply_fission", "apply_scattering", "assemble",
    "assemble_block", "assemble_preconditioner", "compute_scalar_flux", "element_matrices",
    "GENERATORS", "gen_problem", "infinite_medium", "mini_lattice", "pure_absorber",
    "SIDES", "SIDE_NORMALS", "StructuredMesh", "ConfigError", "Material", "ProblemSpec",
    "compute_tau", "load_spec", "save_spec", "spec_from_dict", "spec_to_dict",
    "stabilization_tau", "AngularQuadrature", "build_quadrature",
]
