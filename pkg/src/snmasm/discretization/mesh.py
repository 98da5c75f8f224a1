"""Structured hexahedral meshes with trilinear (Q1) vertex unknowns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Boundary sides and their outward unit normals.
SIDES = ("x-", "x+", "y-", "y+", "z-", "z+")
SIDE_NORMALS = {
    "x-": np.array([-1.0, 0.0, 0.0]),
    "x+": np.array([1.0, 0.0, 0.0]),
    "y-": np.array([0.0, -1.0, 0.0]),
    "y+": np.array([0.0, 1.0, 0.0]),
    "z-": np.array([0.0, 0.0, -1.0]),
    "z+": np.array([0.0, 0.0, 1.0]),
}


@dataclass(frozen=True)
class StructuredMesh:
    """Uniform ``nx * ny * nz`` box of axis-aligned hexahedra.

    Vertices are numbered ``i + (nx+1) * (j + (ny+1) * k)`` and elements
    ``i + nx * (j + ny * k)``.  The local vertex ``a`` of an element sits at
    offset ``(a & 1, (a >> 1) & 1, (a >> 2) & 1)``.
    """

    nx: int
    ny: int
    nz: int
    hx: float = 1.0
    hy: float = 1.0
    hz: float = 1.0

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError("element counts must be >= 1")
        if min(self.hx, self.hy, self.hz) <= 0:
            raise ValueError("element edge lengths must be > 0")

    @property
    def n_elements(self):
        return self.nx * self.ny * self.nz

    @property
    def n_vertices(self):
        return (self.nx + 1) * (self.ny + 1) * (self.nz + 1)

    @property
    def spacing(self):
        return np.array([self.hx, self.hy, self.hz])

    @property
    def element_size(self):
        """Characteristic element length used by the stabilization."""
        return float(min(self.hx, self.hy, self.hz))

    def vertex_coords(self):
        k, j, i = np.meshgrid(np.arange(self.nz + 1), np.arange(self.ny + 1),
                              np.arange(self.nx + 1), indexing="ij")
        return np.column_stack([i.ravel() * self.hx, j.ravel() * self.hy,
                                k.ravel() * self.hz])

    def element_ijk(self):
        k, j, i = np.meshgrid(np.arange(self.nz), np.arange(self.ny),
                              np.arange(self.nx), indexing="ij")
        return np.column_stack([i.ravel(), j.ravel(), k.ravel()])

    def element_centroids(self):
        return (self.element_ijk() + 0.5) * self.spacing

    def connectivity(self):
        """``(n_elements, 8)`` vertex ids in local vertex order."""
        ijk = self.element_ijk()
        nvx, nvy = self.nx + 1, self.ny + 1
        conn = np.empty((self.n_elements, 8), dtype=np.int64)
        for a in range(8):
            i = ijk[:, 0] + (a & 1)
            j = ijk[:, 1] + ((a >> 1) & 1)
            k = ijk[:, 2] + ((a >> 2) & 1)
            conn[:, a] = i + nvx * (j + nvy * k)
        return conn

    def boundary_elements(self, side):
        """Ids of elements with a face on ``side``."""
        ijk = self.element_ijk()
        axis = "xyz".index(side[0])
        last = (self.nx, self.ny, self.nz)[axis] - 1
        target = 0 if side[1] == "-" else last
        return np.flatnonzero(ijk[:, axis] == target)

    def boundary_vertices(self, side):
        coords = self.vertex_coords()
        axis = "xyz".index(side[0])
        extent = (self.nx * self.hx, self.ny * self.hy, self.nz * self.hz)[axis]
        target = 0.0 if side[1] == "-" else extent
        return np.flatnonzero(np.isclose(coords[:, axis], target))

    def vertex_elements(self):
        """For each vertex, the list of adjacent element ids."""
        conn = self.connectivity()
        adj = [[] for _ in range(self.n_vertices)]
        for e, verts in enumerate(conn):
            for v in verts:
                adj[v].append(e)
        return adj
