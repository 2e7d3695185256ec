"""
Sensitivity matrix and the averaging kernel
===========================================

The sensitivity matrix maps element conductivity changes to data changes.
Its column correlations drive the diagonal regularizer, and the
normalized correlation row of an element shows how a point change is
smeared in the inversion-free image.
"""
import numpy as np

from fereit import (assemble_sensitivity, assign_electrodes, build_fidelity_regularizer,
                    extract_data_vector, forward_data, generate_disk_mesh, solve_all)
from fereit.sensitivity import correlation_row, kernel_row

mesh = generate_disk_mesh(1.0, 0.05, symmetry=16)
layout = assign_electrodes(mesh)
ps = solve_all(mesh, layout)
V = extract_data_vector(ps)
S = assemble_sensitivity(mesh, ps)
print("S:", S.shape)

# %% first-order check against a nonlinear solve
rng = np.random.default_rng(0)
d = 1e-3 * rng.uniform(-1, 1, mesh.n_elem)
dv = forward_data(mesh, layout, 1 + d) - V
print("linearization error:", np.linalg.norm(dv - S @ d) / np.linalg.norm(S @ d))

# a uniform change just rescales the data: S @ 1 = -V
print("max |S @ 1 + V|:", np.abs(S.sum(axis=1) + V).max())

# %% regularizer weights grow toward the electrodes
reg = build_fidelity_regularizer(S)
r = np.linalg.norm(mesh.centroids, axis=1)
for lo, hi in [(0, 0.3), (0.3, 0.6), (0.6, 0.9), (0.9, 1.0)]:
    sel = (r >= lo) & (r < hi)
    print(f"r in [{lo}, {hi}): median weight {np.median(reg.weights[sel]):.3e}")

# %% kernel of the centre element
k = int(np.argmin(r))
w = kernel_row(S, reg, k)
d = np.linalg.norm(mesh.centroids - mesh.centroids[k], axis=1)
print("sum |W| =", np.abs(w).sum())
print("signed sum =", w.sum(), " (equals -<S_k, V> / weight)", -(S[:, k] @ V) / reg.weights[k])
nc = np.abs(correlation_row(S, k)) / np.linalg.norm(S, axis=0) / np.linalg.norm(S[:, k])
print(f"mean |normalized correlation| near: {nc[d < 0.1].mean():.3f}  far: {nc[d > 0.5].mean():.3f}")
