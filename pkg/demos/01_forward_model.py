"""
Forward model on a 16-electrode disk
====================================

Build a disk mesh, attach 16 electrodes, drive current through each
neighbouring pair and look at the resulting 208-entry data vector.
"""
import numpy as np

from fereit import assign_electrodes, extract_data_vector, generate_disk_mesh, solve_all
from fereit.forward import measurement_pairs

# %% mesh and electrodes
mesh = generate_disk_mesh(1.0, 0.05, symmetry=16)
layout = assign_electrodes(mesh, 16, coverage=0.5)
print(f"{mesh.n_nodes} nodes, {mesh.n_elem} triangles, "
      f"{layout.n_electrode_nodes} electrode nodes")

# %% sixteen injections share one factorization
ps = solve_all(mesh, layout)
print("electrode potentials for injection 1:")
print(np.round(ps.U[0], 4))

# currents in and out of each electrode: +1 on the source, -1 on the sink
print("net electrode currents, injection 1:", np.round(ps.electrode_currents()[0], 10))

# %% the data vector
V = extract_data_vector(ps)
pairs = measurement_pairs() + 1
print(f"{V.size} measurements; first few (drive, measure) pairs:")
for (j, i), v in list(zip(pairs, V))[:5]:
    print(f"  drive {j:2d}-{j % 16 + 1:2d}  measure {i:2d}-{i % 16 + 1:2d}  {v:+.5f}")

# reciprocity: swapping drive and measurement pairs leaves the value unchanged
index = {tuple(p): r for r, p in enumerate(pairs)}
gap = max(abs(V[r] - V[index[(i, j)]]) for (j, i), r in index.items() if (i, j) in index)
print(f"largest reciprocity gap: {gap:.1e}")
