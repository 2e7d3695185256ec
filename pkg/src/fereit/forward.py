"""Shunt-electrode forward model for the 16-electrode neighbouring protocol.

Each electrode's nodes are condensed into one degree of freedom, which makes
the electrodes perfect conductors.  The constant nullspace is removed with a
single Lagrange multiplier enforcing ``sum_i U_i = 0``, so the system

    [ K   c ] [x]   [f]
    [ c^T 0 ] [m] = [0]

is symmetric indefinite.  It is factorised once and reused for the 16
injections and for any number of adjoint (dipole) solves.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import ElectrodeLayout, Mesh

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    pass


def measurement_pairs(n_electrodes=16):
    """(injection j, measurement i) pairs in data-vector order, 0-based.

    For injection pair (j, j+1) the retained measurement pairs are
    i = j+2, ..., j+n-2 (mod n), i.e. all but i in {j-1, j, j+1}.
    """
    n = n_electrodes
    j = np.repeat(np.arange(n), n - 3)
    i = (j + 2 + np.tile(np.arange(n - 3), n)) % n
    return np.column_stack([j, i])


def check_conductivity(mesh: Mesh, sigma):
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim == 0:
        sigma = np.full(mesh.n_elem, float(sigma))
    if sigma.shape != (mesh.n_elem,):
        raise ValueError(f"conductivity has shape {sigma.shape}, expected ({mesh.n_elem},)")
    if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
        raise ValueError("conductivity must be finite and strictly positive")
    return sigma


def stiffness_matrix(mesh: Mesh, sigma, node_dof=None, n_dof=None):
    """P1 stiffness ``sum_k sigma_k area_k G_k G_k^T``, optionally condensed.

    ``node_dof`` maps each node to a (possibly shared) unknown; shared
    unknowns simply accumulate, which is exactly the equipotential condition.
    """
    g = mesh.basis_gradients
    ke = np.einsum("tad,tbd->tab", g, g) * (sigma * mesh.areas)[:, None, None]
    t = mesh.triangles if node_dof is None else node_dof[mesh.triangles]
    n = mesh.n_nodes if n_dof is None else n_dof
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    return sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsc()


@dataclass(frozen=True, eq=False)
class CondensedSystem:
    mesh: Mesh
    layout: ElectrodeLayout
    sigma: np.ndarray
    node_dof: np.ndarray          # node -> unknown index
    n_free: int                   # unknowns belonging to non-electrode nodes
    stiffness: sp.csc_matrix      # condensed K, shape (n_free + 16, n_free + 16)
    matrix: sp.csc_matrix         # saddle-point matrix incl. multiplier row

    @property
    def n_electrodes(self):
        return len(self.layout)

    @property
    def electrode_dofs(self):
        return self.n_free + np.arange(self.n_electrodes)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @cached_property
    def _lu(self):
        try:
            return splu(self.matrix, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SolverError(f"factorisation failed: {exc}") from exc

    def solve(self, rhs):
        """Solve for one or more right-hand sides over the (n_free + 16) unknowns.

        Returns the primal block; the multiplier is dropped after the
        residual check.
        """
        rhs = np.asarray(rhs, dtype=np.float64)
        one = rhs.ndim == 1
        b = rhs[:, None] if one else rhs
        full = np.zeros((self.dim, b.shape[1]))
        full[:-1] = b
        x = self._lu.solve(full)
        if not np.all(np.isfinite(x)):
            raise SolverError("solver produced non-finite values (singular system?)")
        r = self.matrix @ x - full
        scale = np.maximum(np.abs(self.matrix) @ np.abs(x) + np.abs(full), 1e-300).max(axis=0)
        rel = np.abs(r).max(axis=0) / scale
        if np.any(rel > RESIDUAL_TOL):
            raise SolverError(f"relative residual {rel.max():.2e} exceeds {RESIDUAL_TOL:g}")
        x = x[:-1]
        return x[:, 0] if one else x

    def node_values(self, x):
        """Expand unknowns to node potentials (``x`` may be 1-D or (dof, m))."""
        return x[self.node_dof]


def assemble_system(mesh: Mesh, layout: ElectrodeLayout, sigma=1.0):
    """Condensed shunt-model system for conductivity ``sigma``."""
    sigma = check_conductivity(mesh, sigma)
    layout.validate(mesh)
    n_el = len(layout)
    node_dof = np.full(mesh.n_nodes, -1, dtype=np.int64)
    for e, g in enumerate(layout.groups):
        node_dof[g] = e  # provisional, shifted below
    free = node_dof < 0
    n_free = int(free.sum())
    node_dof[~free] += n_free
    node_dof[free] = np.arange(n_free)
    n = n_free + n_el

    K = stiffness_matrix(mesh, sigma, node_dof, n)
    c = np.zeros((n, 1))
    c[n_free:] = 1.0
    A = sp.bmat([[K, sp.csc_matrix(c)], [sp.csc_matrix(c.T), None]], format="csc")
    node_dof.flags.writeable = False
    sigma.flags.writeable = False
    return CondensedSystem(mesh, layout, sigma, node_dof, n_free, K, A)


def injection_rhs(system: CondensedSystem, j):
    """Load vector for unit current into electrode ``j`` and out of ``j+1`` (1-based)."""
    n_el = system.n_electrodes
    if not 1 <= j <= n_el:
        raise ValueError(f"injection index must be in 1..{n_el}")
    f = np.zeros(system.dim - 1)
    f[system.n_free + (j - 1)] = 1.0
    f[system.n_free + j % n_el] = -1.0
    return f


def solve_injection(system: CondensedSystem, j):
    """Node potentials and the 16 electrode potentials for injection ``j`` (1-based)."""
    x = system.solve(injection_rhs(system, j))
    return system.node_values(x), x[system.electrode_dofs]


@dataclass(frozen=True, eq=False)
class PotentialSet:
    """Solutions for all injections.

    ``u[j]`` holds the node potentials for the (j+1)-th injection and
    ``U[j, i]`` the potential of electrode i+1 under that injection.
    """

    system: CondensedSystem
    u: np.ndarray
    U: np.ndarray

    @property
    def mesh(self):
        return self.system.mesh

    @property
    def layout(self):
        return self.system.layout

    @cached_property
    def gradients(self):
        """Constant element gradients of every u_j, shape (16, T, 2)."""
        g = self.mesh.basis_gradients
        return np.einsum("jta,tad->jtd", self.u[:, self.mesh.triangles], g)

    def electrode_currents(self):
        """Net current leaving each electrode, shape (16, 16), from ``K U``."""
        x = np.zeros((self.system.dim - 1, self.u.shape[0]))
        # recover unknown vector from node values
        x[self.system.node_dof] = self.u.T
        return (self.system.stiffness @ x)[self.system.electrode_dofs].T


def solve_all(mesh: Mesh, layout: ElectrodeLayout, sigma=1.0, system=None):
    if system is None:
        system = assemble_system(mesh, layout, sigma)
    n_el = system.n_electrodes
    rhs = np.column_stack([injection_rhs(system, j) for j in range(1, n_el + 1)])
    x = system.solve(rhs)
    u = system.node_values(x).T.copy()
    U = x[system.electrode_dofs].T.copy()
    u.flags.writeable = False
    U.flags.writeable = False
    return PotentialSet(system, u, U)


def extract_data_vector(ps: PotentialSet):
    """The 208 neighbouring-protocol voltages V^{j,i} = U_i^j - U_{i+1}^j."""
    n = ps.U.shape[0]
    pairs = measurement_pairs(n)
    j, i = pairs[:, 0], pairs[:, 1]
    return ps.U[j, i] - ps.U[j, (i + 1) % n]


def forward_data(mesh, layout, sigma):
    """Shortcut: data vector for conductivity ``sigma``."""
    return extract_data_vector(solve_all(mesh, layout, sigma))


def dipole_load(ps: PotentialSet, k, j):
    """Weak-form load of div(chi_k grad u_j): area_k * grad(phi_a) . grad(u_j) on element k."""
    mesh = ps.mesh
    if not 0 <= k < mesh.n_elem:
        raise IndexError(f"element index {k} outside 0..{mesh.n_elem - 1}")
    if not 1 <= j <= ps.u.shape[0]:
        raise ValueError(f"injection index must be in 1..{ps.u.shape[0]}")
    local = mesh.areas[k] * mesh.basis_gradients[k] @ ps.gradients[j - 1, k]
    f = np.zeros(ps.system.dim - 1)
    np.add.at(f, ps.system.node_dof[mesh.triangles[k]], local)
    return f


def solve_adjoint_dipole(ps: PotentialSet, k, j):
    """Adjoint potential for element ``k`` (0-based) and injection ``j`` (1-based).

    Returns ``(node_values, electrode_values)``.  For every measurement pair
    ``phi|E_i - phi|E_{i+1}`` equals the element integral of
    ``grad u_i . grad u_j`` over element k.
    """
    x = ps.system.solve(dipole_load(ps, k, j))
    return ps.system.node_values(x), x[ps.system.electrode_dofs]
