"""
Writing the scalar flux
=======================

Solve the small lattice and write group fluxes to CSV and legacy VTK,
then read them back.  The VTK file opens directly in ParaView.
"""

import tempfile
from pathlib import Path

from snmasm.discretization import assemble, mini_lattice
from snmasm.eigensolver import newton_solve
from snmasm.export import export_flux, read_flux_csv, read_flux_vtk

system = assemble(mini_lattice(n_pins=2, cells_per_pin=4))
state, _ = newton_solve(system)
phi = system.scalar_flux(state.psi)
print("flux shape (groups, vertices):", phi.shape)

out = Path(tempfile.mkdtemp())
export_flux(phi, system.spec.mesh, out / "flux.csv")
export_flux(phi, system.spec.mesh, out / "flux.vtk")

coords, back = read_flux_csv(out / "flux.csv")
print("csv rows:", back.size, " max fast/thermal ratio:", float((back[0] / back[1]).max()))
print("vtk fields:", sorted(read_flux_vtk(out / "flux.vtk")))
print("written to", out)
