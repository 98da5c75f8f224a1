"""
Why coarsen one block instead of all of them
============================================

The transport preconditioning matrix is block diagonal with one block per
(group, direction) pair, and every block shares the spatial pattern.
Aggregating the full matrix touches G*Nd times more rows than aggregating
a single block and copying its interpolation.
"""

import time

from snmasm.discretization import assemble, mini_lattice
from snmasm.multilevel import setup_masm, setup_masm_sub
from snmasm.schwarz import hierarchical_partition

system = assemble(mini_lattice())
owner = hierarchical_partition(system.spec.mesh, 1, 4).vertex_owner

for name, setup in (("masm", setup_masm), ("masm_sub", setup_masm_sub)):
    t0 = time.perf_counter()
    h = setup(system.P, system.layout, owner)
    dt = time.perf_counter() - t0
    rows = [lvl.rows for lvl in h.levels]
    print(f"{name:9s} setup {dt:6.3f}s  coarsened rows {h.coarsened_rows:6d}  levels {rows}")

print("blocks G*Nd =", system.layout.n_blocks)
