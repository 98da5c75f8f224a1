"""
Infinite medium eigenvalue
==========================

A reflecting cube of one material has no leakage, so the multiplication
factor is just production over removal.  This makes it a clean first check
of the whole discretize / assemble / Newton pipeline.
"""

import numpy as np

from snmasm.discretization import assemble, infinite_medium
from snmasm.eigensolver import newton_solve

# One group, 4x4x4 cells, S2 directions, every face reflecting.
spec = infinite_medium(sigma_t=[1.0], sigma_s=[[0.5]], nu_sigma_f=[0.6], mesh=4)
system = assemble(spec)
print("unknowns:", system.layout.size, "=", system.layout.n_blocks, "blocks of", system.layout.n_space)

# Analytic answer: nu_sigma_f / (sigma_t - sigma_s).
state, report = newton_solve(system)
print(f"k = {state.k:.10f}   (expected 1.2)")
print("newton iterations:", report.iter_newton, " residual history:",
      [f"{r:.1e}" for r in report.residual_history])

# The scalar flux of an infinite medium is flat.
phi = system.scalar_flux(state.psi)
print("flux spread / mean:", float(np.ptp(phi) / phi.mean()))
