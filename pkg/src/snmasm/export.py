"""Scalar-flux export to CSV and legacy VTK, plus readers for round trips."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

FORMATS = ("csv", "vtk")


def export_flux(phi, mesh, path, fmt=None):
    """Write ``phi`` (shape ``(G, n_vertices)``) on ``mesh`` to ``path``.

    ``fmt`` defaults to the file suffix.  CSV has one row per
    ``(vertex, group)``; VTK is an ASCII structured grid with one point
    field ``phi_g<g>`` per group.
    """
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt not in FORMATS:
        raise ValueError(f"unknown flux format {fmt!r}; expected one of {FORMATS}")
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    if phi.shape[1] != mesh.n_vertices:
        raise ValueError(f"flux has {phi.shape[1]} values per group, mesh has "
                         f"{mesh.n_vertices} vertices")
    coords = mesh.vertex_coords()
    try:
        with path.open("w", newline="") as fh:
            if fmt == "csv":
                _write_csv(fh, coords, phi)
            else:
                _write_vtk(fh, mesh, coords, phi)
    except OSError as exc:
        raise OSError(f"cannot write flux to {path}: {exc.strerror or exc}") from exc
    return path


def _write_csv(fh, coords, phi):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["x", "y", "z", "group", "phi"])
    for v, (x, y, z) in enumerate(coords):
        for g in range(phi.shape[0]):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(z)), g,
                        repr(float(phi[g, v]))])


def _write_vtk(fh, mesh, coords, phi):
    n = mesh.n_vertices
    fh.write("# vtk DataFile Version 3.0\nscalar flux\nASCII\nDATASET STRUCTURED_GRID\n")
    fh.write(f"DIMENSIONS {mesh.nx + 1} {mesh.ny + 1} {mesh.nz + 1}\n")
    fh.write(f"POINTS {n} double\n")
    for x, y, z in coords:
        fh.write(f"{x!r} {y!r} {z!r}\n")
    fh.write(f"POINT_DATA {n}\n")
    for g in range(phi.shape[0]):
        fh.write(f"SCALARS phi_g{g} double 1\nLOOKUP_TABLE default\n")
        fh.write("\n".join(repr(float(v)) for v in phi[g]) + "\n")


def read_flux_csv(path):
    """Return ``(coords, phi)`` with ``phi`` shaped ``(G, n_vertices)``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    G = int(data[:, 3].max()) + 1
    coords = data[::G, :3]
    return coords, data[:, 4].reshape(-1, G).T.copy()


def read_flux_vtk(path):
    """Return ``{field_name: values}`` for every point field in a legacy file."""
    lines = Path(path).read_text().splitlines()
    fields = {}
    n = None
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if parts and parts[0] == "POINT_DATA":
            n = int(parts[1])
        if parts and parts[0] == "SCALARS":
            fields[parts[1]] = np.array([float(v) for v in lines[i + 2:i + 2 + n]])
            i += 2 + n
            continue
        i += 1
    return fields
