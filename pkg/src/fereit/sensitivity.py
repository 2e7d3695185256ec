"""Sensitivity (Jacobian) matrix and the quantities built from its columns.

Row ``r`` of S corresponds to measurement pair ``measurement_pairs()[r]`` and
column ``k`` to element k.  With P1 potentials the entry

    S[(j, i), k] = -area_k * grad(u_i) . grad(u_j)  on element k

is an exact element integral.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import PotentialSet, measurement_pairs
from .mesh import Mesh

GRAM_BLOCK = 512


def assemble_sensitivity(mesh: Mesh, ps: PotentialSet):
    """Dense (208, n_elem) sensitivity matrix at the conductivity of ``ps``."""
    if ps.mesh is not mesh and (ps.mesh.n_elem != mesh.n_elem
                                or not np.array_equal(ps.mesh.triangles, mesh.triangles)):
        raise ValueError("potential set was computed on a different mesh")
    pairs = measurement_pairs(ps.u.shape[0])
    g = ps.gradients
    S = np.empty((len(pairs), mesh.n_elem))
    for r, (j, i) in enumerate(pairs):
        S[r] = np.einsum("td,td->t", g[i], g[j])
    S *= -mesh.areas
    return S


def sensitivity_entry(mesh: Mesh, ps: PotentialSet, j, i, k):
    """One entry recomputed from scratch (0-based injection/measurement/element)."""
    tri = mesh.triangles[k]
    grad = mesh.basis_gradients[k]
    gi = ps.u[i, tri] @ grad
    gj = ps.u[j, tri] @ grad
    return -mesh.areas[k] * float(gi @ gj)


def _column(S, k):
    if not -S.shape[1] <= k < S.shape[1]:
        raise IndexError(f"column {k} out of range")
    return S[:, k]


def column_correlation(S, k, l):
    return float(_column(S, k) @ _column(S, l))


def normalized_correlation(S, k, l):
    a, b = _column(S, k), _column(S, l)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("zero-norm sensitivity column")
    return float(a @ b / (na * nb))


def correlation_row(S, k, normalized=False):
    """<S_k, S_l> for all l (optionally divided by |S_k||S_l|)."""
    row = _column(S, k) @ S
    if normalized:
        norms = np.linalg.norm(S, axis=0)
        row = row / (norms[k] * norms)
    return row


@dataclass(frozen=True, eq=False)
class FidelityRegularizer:
    """Diagonal regularizer with ``diag[k] = sqrt(sum_l |<S_k, S_l>|)``.

    The sum runs over every column, the self term ``l = k`` included.
    """

    diag: np.ndarray

    @property
    def weights(self):
        """Diagonal of R^T R, i.e. ``sum_l |<S_k, S_l>|``."""
        return self.diag ** 2

    def __len__(self):
        return len(self.diag)


def abs_gram_row_sums(S, block=GRAM_BLOCK):
    """``sum_l |<S_k, S_l>|`` for every k without forming the full Gram matrix."""
    n = S.shape[1]
    out = np.empty(n)
    for start in range(0, n, block):
        stop = min(start + block, n)
        out[start:stop] = np.abs(S[:, start:stop].T @ S).sum(axis=1)
    return out


def build_fidelity_regularizer(S, block=GRAM_BLOCK):
    S = np.asarray(S, dtype=np.float64)
    if np.any(~S.any(axis=0)):
        raise ValueError("sensitivity matrix has a zero column")
    d = np.sqrt(abs_gram_row_sums(S, block))
    d.flags.writeable = False
    return FidelityRegularizer(d)


@dataclass(frozen=True, eq=False)
class BoundarySubmatrix:
    matrix: np.ndarray
    elements: np.ndarray  # column c of ``matrix`` is column ``elements[c]`` of S


def boundary_submatrix(S, elements):
    elements = np.asarray(elements, dtype=np.int64).ravel()
    if elements.size == 0:
        raise ValueError("empty boundary element set")
    if elements.min() < 0 or elements.max() >= S.shape[1]:
        raise IndexError("boundary element index out of range")
    return BoundarySubmatrix(np.ascontiguousarray(S[:, elements]), elements.copy())


def kernel_row(S, reg: FidelityRegularizer, k):
    """Averaging kernel W(k, .) = <S_k, S_.> / sum_i |<S_k, S_i>|."""
    w = reg.weights[k]
    if w == 0:
        raise ZeroDivisionError("zero kernel scaling factor")
    return correlation_row(S, k) / w
