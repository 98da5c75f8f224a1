"""Built-in problem generators.

``infinite_medium`` and ``pure_absorber`` are analytic test fixtures.
``mini_lattice`` is a small two-material pin lattice, voxelized on a
structured mesh, with reflecting and vacuum sides mixed the way a corner
of a core benchmark is usually cut.
"""

from __future__ import annotations

import numpy as np

from .mesh import SIDES, StructuredMesh
from .problem import ConfigError, Material, ProblemSpec
from .quadrature import build_quadrature

MODERATOR_ID = 0
FUEL_ID = 1

# two-group fuel-like / moderator-like data [1/cm]; sigma_s[g][gp] is gp -> g
FUEL_2G = dict(sigma_t=[0.55, 1.20], sigma_s=[[0.42, 0.0], [0.03, 0.85]],
               nu_sigma_f=[0.015, 0.40], chi=[1.0, 0.0])
MODERATOR_2G = dict(sigma_t=[0.65, 2.10], sigma_s=[[0.58, 0.0], [0.065, 2.07]],
                    nu_sigma_f=[0.0, 0.0], chi=[1.0, 0.0])


def _quadrature(quadrature):
    if isinstance(quadrature, dict):
        return build_quadrature(quadrature["kind"], int(quadrature["order"]))
    if isinstance(quadrature, (tuple, list)):
        return build_quadrature(quadrature[0], int(quadrature[1]))
    return quadrature


def _mesh(mesh):
    if isinstance(mesh, StructuredMesh):
        return mesh
    if isinstance(mesh, int):
        return StructuredMesh(mesh, mesh, mesh)
    if isinstance(mesh, (tuple, list)):
        return StructuredMesh(*mesh)
    return StructuredMesh(**mesh)


def infinite_medium(sigma_t=(1.0,), sigma_s=((0.5,),), nu_sigma_f=(0.6,), chi=None,
                    mesh=4, quadrature=("level-symmetric", 2)):
    """Uniform material with every side reflecting."""
    mesh = _mesh(mesh)
    mat = Material.create(0, sigma_t, sigma_s, nu_sigma_f, chi)
    return ProblemSpec(mesh, _quadrature(quadrature), {0: mat},
                       np.zeros(mesh.n_elements, dtype=np.int64),
                       {s: "reflecting" for s in SIDES})


def pure_absorber(sigma_t=(1.0,), mesh=4, quadrature=("level-symmetric", 2)):
    """No scattering, no fission, vacuum on every side."""
    mesh = _mesh(mesh)
    sigma_t = np.atleast_1d(np.asarray(sigma_t, dtype=float))
    G = len(sigma_t)
    mat = Material.create(0, sigma_t, np.zeros((G, G)), np.zeros(G))
    return ProblemSpec(mesh, _quadrature(quadrature), {0: mat},
                       np.zeros(mesh.n_elements, dtype=np.int64),
                       {s: "vacuum" for s in SIDES})


def pin_lattice_map(mesh, n_pins, pitch, radius, fuel_id=FUEL_ID, moderator_id=MODERATOR_ID):
    """Voxelize an ``n_pins x n_pins`` lattice of cylindrical pins along z.

    An element is fuel when its centroid lies within ``radius`` of the
    nearest pin axis.
    """
    c = mesh.element_centroids()
    cell = np.floor(c[:, :2] / pitch)
    inside = np.all(cell < n_pins, axis=1)
    center = (cell + 0.5) * pitch
    r = np.linalg.norm(c[:, :2] - center, axis=1)
    fuel = inside & (r <= radius)
    return np.where(fuel, fuel_id, moderator_id).astype(np.int64)


def mini_lattice(n_pins=4, cells_per_pin=4, pitch=1.26, radius=0.54, nz=1,
                 quadrature=("level-symmetric", 2), fuel=None, moderator=None):
    """Two-material pin lattice, one element layer thick by default.

    Reflecting on x-, y-, z- and z+; vacuum on x+ and y+.
    """
    n = n_pins * cells_per_pin
    h = pitch / cells_per_pin
    mesh = StructuredMesh(n, n, nz, h, h, h)
    fuel = Material.create(FUEL_ID, **(fuel or FUEL_2G))
    moderator = Material.create(MODERATOR_ID, **(moderator or MODERATOR_2G))
    mat_map = pin_lattice_map(mesh, n_pins, pitch, radius)
    bcs = {"x-": "reflecting", "y-": "reflecting", "z-": "reflecting",
           "z+": "reflecting", "x+": "vacuum", "y+": "vacuum"}
    return ProblemSpec(mesh, _quadrature(quadrature),
                       {FUEL_ID: fuel, MODERATOR_ID: moderator}, mat_map, bcs)


GENERATORS = {
    "infinite_medium": infinite_medium,
    "pure_absorber": pure_absorber,
    "mini_lattice": mini_lattice,
}


def gen_problem(kind, params=None):
    """Build a :class:`ProblemSpec` from a generator name and keyword params."""
    if kind not in GENERATORS:
        raise ConfigError("generator", f"unknown problem kind {kind!r}; "
                                       f"expected one of {sorted(GENERATORS)}")
    return GENERATORS[kind](**(params or {}))
