"""Two-dimensional P1 triangle meshes with a 16-electrode boundary layout.

A :class:`Mesh` is validated at construction: counterclockwise triangles,
conforming edges and a single closed boundary loop.  Everything downstream
(forward solves, sensitivity assembly, rendering) assumes those invariants.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay


class MeshError(ValueError):
    """Raised for malformed or non-conforming meshes."""


class MeshParseError(MeshError):
    pass


class MeshTopologyError(MeshError):
    pass


class MeshIndexError(MeshError, IndexError):
    pass


class LayoutError(ValueError):
    """Raised when electrodes cannot be placed on a boundary."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


def signed_areas(nodes, triangles):
    p = nodes[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _edge_table(triangles):
    """Directed edges (a->b) of every triangle, in local order 01, 12, 20."""
    t = triangles
    return np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)


def _boundary_loop(n_nodes, triangles):
    directed = _edge_table(triangles)
    undirected = np.sort(directed, axis=1)
    uniq, inverse, counts = np.unique(undirected, axis=0, return_inverse=True,
                                      return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        raise MeshTopologyError("edge shared by more than two triangles")

    # interior edges must be traversed once in each direction
    interior = counts[inverse] == 2
    keys = directed[:, 0].astype(np.int64) * n_nodes + directed[:, 1]
    if len(np.unique(keys[interior])) != int(interior.sum()):
        raise MeshTopologyError("inconsistent triangle orientation across an interior edge")

    bnd = directed[~interior]
    if len(bnd) < 3:
        raise MeshTopologyError("mesh has no boundary")
    succ = {}
    for a, b in bnd:
        if a in succ:
            raise MeshTopologyError(f"boundary is not a simple cycle at node {a}")
        succ[int(a)] = int(b)

    start = min(succ)
    loop = [start]
    node = succ[start]
    while node != start:
        loop.append(node)
        if len(loop) > len(succ):
            raise MeshTopologyError("boundary walk did not close")
        node = succ[node]
    if len(loop) != len(succ):
        raise MeshTopologyError("boundary consists of more than one loop")
    return np.array(loop, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming counterclockwise triangulation of a simply connected domain.

    ``parent`` and ``midpoint_of`` are only set on meshes produced by
    :func:`refine`: ``parent[k]`` is the coarse element containing fine
    element ``k`` and ``midpoint_of[m]`` holds the two coarse nodes whose
    midpoint became fine node ``n_coarse_nodes + m``.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_loop: np.ndarray = field(init=False)
    parent: np.ndarray | None = None
    midpoint_of: np.ndarray | None = None

    def __post_init__(self):
        nodes = _frozen(self.nodes, np.float64)
        tris = _frozen(self.triangles, np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2 or len(nodes) < 3:
            raise MeshError("nodes must be an (N, 2) array with N >= 3")
        if tris.ndim != 2 or tris.shape[1] != 3 or len(tris) < 1:
            raise MeshError("triangles must be a non-empty (T, 3) array")
        if tris.min() < 0 or tris.max() >= len(nodes):
            raise MeshIndexError("triangle references a node index out of range")
        area = signed_areas(nodes, tris)
        scale = np.ptp(nodes, axis=0).max() ** 2
        if np.any(area <= 1e-14 * scale):
            bad = int(np.argmin(area))
            raise MeshTopologyError(
                f"triangle {bad} has non-positive area {area[bad]:.3e} (need CCW, non-degenerate)")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary_loop", _frozen(_boundary_loop(len(nodes), tris), np.int64))
        if self.parent is not None:
            object.__setattr__(self, "parent", _frozen(self.parent, np.int64))
        if self.midpoint_of is not None:
            object.__setattr__(self, "midpoint_of", _frozen(self.midpoint_of, np.int64))

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elem(self):
        return len(self.triangles)

    @cached_property
    def areas(self):
        return signed_areas(self.nodes, self.triangles)

    @cached_property
    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    @cached_property
    def basis_gradients(self):
        """Constant gradients of the three P1 hat functions, shape (T, 3, 2)."""
        p = self.nodes[self.triangles]
        # grad(phi_a) = rot90(opposite edge) / (2 area)
        e0 = p[:, 2] - p[:, 1]
        e1 = p[:, 0] - p[:, 2]
        e2 = p[:, 1] - p[:, 0]
        g = np.stack([e0, e1, e2], axis=1)
        g = np.stack([-g[..., 1], g[..., 0]], axis=-1)
        return g / (2.0 * self.areas)[:, None, None]

    @cached_property
    def edges(self):
        """Sorted unique undirected edges, lexicographic order."""
        return np.unique(np.sort(_edge_table(self.triangles), axis=1), axis=0)

    @cached_property
    def boundary_edges(self):
        loop = self.boundary_loop
        return np.stack([loop, np.roll(loop, -1)], axis=1)

    @cached_property
    def element_adjacency(self):
        """Sparse element-element adjacency through shared edges."""
        from scipy.sparse import coo_matrix

        und = np.sort(_edge_table(self.triangles), axis=1)
        _, inv = np.unique(und, axis=0, return_inverse=True)
        inv = inv.ravel()
        owner = np.repeat(np.arange(self.n_elem), 3)
        order = np.argsort(inv, kind="stable")
        inv_s, own_s = inv[order], owner[order]
        pair = np.flatnonzero(inv_s[1:] == inv_s[:-1])
        a, b = own_s[pair], own_s[pair + 1]
        n = self.n_elem
        adj = coo_matrix((np.ones(2 * len(a)), (np.r_[a, b], np.r_[b, a])), shape=(n, n))
        return adj.tocsr()

    def total_area(self):
        return float(self.areas.sum())

    def boundary_polygon_area(self):
        p = self.nodes[self.boundary_loop]
        x, y = p[:, 0], p[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True, eq=False)
class ElectrodeLayout:
    """Ordered electrode node groups; each group is a contiguous boundary run."""

    groups: tuple

    def __post_init__(self):
        groups = tuple(_frozen(g, np.int64) for g in self.groups)
        object.__setattr__(self, "groups", groups)

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    @property
    def n_electrode_nodes(self):
        return sum(len(g) for g in self.groups)

    def validate(self, mesh: Mesh):
        """Check the layout invariants against ``mesh``; raise LayoutError."""
        loop = mesh.boundary_loop
        pos = np.full(mesh.n_nodes, -1)
        pos[loop] = np.arange(len(loop))
        B = len(loop)
        seen = set()
        starts = []
        for e, g in enumerate(self.groups):
            if len(g) < 2:
                raise LayoutError(f"electrode {e + 1} has fewer than two nodes")
            if g.min() < 0 or g.max() >= mesh.n_nodes:
                raise LayoutError(f"electrode {e + 1} references a node out of range")
            p = pos[g]
            if np.any(p < 0):
                raise LayoutError(f"electrode {e + 1} contains a non-boundary node")
            if np.any((p[1:] - p[:-1]) % B != 1):
                raise LayoutError(f"electrode {e + 1} is not a contiguous CCW boundary run")
            if seen.intersection(g.tolist()):
                raise LayoutError(f"electrode {e + 1} overlaps another electrode")
            seen.update(g.tolist())
            starts.append(p[0])
        # CCW ordering: starting positions increase cyclically, one turn in total
        steps = (np.roll(starts, -1) - np.array(starts)) % B
        if int(steps.sum()) != B:
            raise LayoutError("electrodes are not in counterclockwise boundary order")
        for e, g in enumerate(self.groups):
            nxt = self.groups[(e + 1) % len(self.groups)]
            if (pos[nxt[0]] - pos[g[-1]]) % B < 1:
                raise LayoutError(f"no gap between electrodes {e + 1} and {(e + 1) % len(self) + 1}")
        return self


def generate_disk_mesh(radius, target_edge_length, symmetry=1):
    """Concentric-ring Delaunay mesh of a disk centred at the origin.

    Ring ``m`` sits at radius ``m * radius / M`` with ``M = ceil(radius / h)``;
    the node count of each ring is rounded to a multiple of ``symmetry`` so
    ``symmetry=16`` yields a mesh whose node set is invariant under rotation
    by 2*pi/16.  The first outer-ring node lies at angle 0.
    """
    radius = float(radius)
    h = float(target_edge_length)
    if not (radius > 0 and h > 0):
        raise ValueError("radius and target_edge_length must be positive")
    if h >= radius:
        raise ValueError("target_edge_length must be smaller than radius")
    n_rings = int(np.ceil(radius / h - 1e-9))
    dr = radius / n_rings
    pts = [np.zeros((1, 2))]
    for m in range(1, n_rings + 1):
        r = m * dr
        n = max(6, int(round(2 * np.pi * r / dr)))
        if symmetry > 1:
            n = max(symmetry, symmetry * int(round(n / symmetry)))
        # stagger alternate rings by half a step; keep the outer ring at angle 0
        offset = 0.5 * ((n_rings - m) % 2) * 2 * np.pi / n
        theta = offset + 2 * np.pi * np.arange(n) / n
        pts.append(r * np.column_stack([np.cos(theta), np.sin(theta)]))
    # outer ring first so the canonical boundary start is node 0 at angle 0
    pts = [pts[-1]] + pts[:-1]
    nodes = np.vstack(pts)
    tri = Delaunay(nodes, qhull_options="Qbb Qc Qz Q12").simplices.astype(np.int64)
    area = signed_areas(nodes, tri)
    tri[area < 0] = tri[area < 0][:, [0, 2, 1]]
    area = np.abs(area)
    tri = tri[area > 1e-12 * radius ** 2]
    # deterministic element order, lexicographic in node indices
    tri = tri[np.lexsort((tri[:, 2], tri[:, 1], tri[:, 0]))]
    return Mesh(nodes, tri)


def assign_electrodes(mesh: Mesh, count=16, coverage=0.5):
    """Place ``count`` equally spaced electrodes covering ``coverage`` of the boundary.

    Electrode 1 is centred on the boundary node seen at angle closest to 0
    from the boundary centroid, so placement does not depend on node
    numbering; the rest follow counterclockwise.  Each electrode's extent is
    rounded to whole boundary edges.
    """
    if not 0 < coverage < 1:
        raise ValueError("coverage must lie in (0, 1)")
    loop = mesh.boundary_loop
    B = len(loop)
    rel = mesh.nodes[loop] - mesh.nodes[loop].mean(axis=0)
    ang = np.abs(np.arctan2(rel[:, 1], rel[:, 0]))
    anchor = int(np.flatnonzero(ang <= ang.min() + 1e-12)[0])
    loop = np.roll(loop, -anchor)
    if B < 2 * count:
        raise LayoutError(f"boundary has {B} nodes; need at least {2 * count} for {count} electrodes")
    p = mesh.nodes[loop]
    seg = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    L = s[-1]
    half = 0.5 * coverage * L / count

    def nearest(x):
        x = x % L
        i = int(np.searchsorted(s, x))
        i = min(max(i, 1), B)
        j = i if (s[i] - x) < (x - s[i - 1]) else i - 1
        return j % B

    bounds = []
    for e in range(count):
        c = e * L / count
        bounds.append([nearest(c - half), nearest(c + half)])
    for e in range(count):
        a, b = bounds[e]
        na = bounds[(e + 1) % count][0]
        # keep at least one gap edge before the next electrode
        if (na - a) % B <= (b - a) % B:
            bounds[e][1] = (na - 1) % B
    groups = []
    for e, (a, b) in enumerate(bounds):
        n = (b - a) % B + 1
        if n < 2 or n > B // 2:
            raise LayoutError(f"boundary too coarse: electrode {e + 1} would have {n} node(s)")
        groups.append(loop[(a + np.arange(n)) % B])
    return ElectrodeLayout(tuple(groups)).validate(mesh)


def refine(mesh: Mesh):
    """Split every triangle into four through its edge midpoints.

    Midpoint nodes are appended after the original nodes in lexicographic
    edge order.  The result carries ``parent`` and ``midpoint_of``.
    """
    edges = mesh.edges
    n0 = mesh.n_nodes
    mid_nodes = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    key = edges[:, 0] * n0 + edges[:, 1]

    def mid(a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        return n0 + np.searchsorted(key, lo * n0 + hi)

    t = mesh.triangles
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
    fine = np.stack([
        np.column_stack([a, ab, ca]),
        np.column_stack([ab, b, bc]),
        np.column_stack([ca, bc, c]),
        np.column_stack([ab, bc, ca]),
    ], axis=1).reshape(-1, 3)
    parent = np.repeat(np.arange(mesh.n_elem), 4)
    return Mesh(np.vstack([mesh.nodes, mid_nodes]), fine, parent=parent, midpoint_of=edges)


def refine_layout(layout: ElectrodeLayout, fine: Mesh):
    """Carry a coarse electrode layout onto ``fine = refine(coarse)``."""
    if fine.midpoint_of is None:
        raise ValueError("mesh was not produced by refine()")
    n0 = fine.n_nodes - len(fine.midpoint_of)
    key = fine.midpoint_of[:, 0] * n0 + fine.midpoint_of[:, 1]
    groups = []
    for g in layout.groups:
        lo, hi = np.minimum(g[:-1], g[1:]), np.maximum(g[:-1], g[1:])
        m = n0 + np.searchsorted(key, lo * n0 + hi)
        out = np.empty(2 * len(g) - 1, dtype=np.int64)
        out[0::2] = g
        out[1::2] = m
        groups.append(out)
    return ElectrodeLayout(tuple(groups)).validate(fine)


def coarsen(values, fine: Mesh):
    """Area-weighted average of fine-element values onto parent elements."""
    if fine.parent is None:
        raise ValueError("mesh was not produced by refine()")
    n = int(fine.parent.max()) + 1
    w = fine.areas
    num = np.bincount(fine.parent, weights=w * np.asarray(values), minlength=n)
    den = np.bincount(fine.parent, weights=w, minlength=n)
    return num / den


def boundary_elements(mesh: Mesh):
    """Indices (sorted) of elements owning at least one boundary edge."""
    und = np.sort(_edge_table(mesh.triangles), axis=1)
    bnd = np.sort(mesh.boundary_edges, axis=1)
    n = mesh.n_nodes
    hit = np.isin(und[:, 0] * n + und[:, 1], bnd[:, 0] * n + bnd[:, 1])
    return np.unique(np.repeat(np.arange(mesh.n_elem), 3)[hit])


# --- text format -----------------------------------------------------------

def save_mesh(mesh: Mesh, path, layout: ElectrodeLayout | None = None):
    lines = [f"N {mesh.n_nodes}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes]
    lines.append(f"T {mesh.n_elem}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    if layout is not None:
        lines.append(f"E {len(layout)}")
        lines += [" ".join(str(int(n)) for n in g) for g in layout.groups]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse(path):
    records = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        s = raw.strip()
        if s and not s.startswith("#"):
            records.append((lineno, s.split()))
    sections = {}
    i = 0
    while i < len(records):
        lineno, tok = records[i]
        if len(tok) != 2 or tok[0] not in ("N", "T", "E"):
            raise MeshParseError(f"{path}:{lineno}: expected section header 'N|T|E <count>'")
        tag = tok[0]
        if tag in sections:
            raise MeshParseError(f"{path}:{lineno}: duplicate section {tag}")
        try:
            count = int(tok[1])
        except ValueError:
            raise MeshParseError(f"{path}:{lineno}: bad count {tok[1]!r}") from None
        body = records[i + 1:i + 1 + count]
        if len(body) != count:
            raise MeshParseError(f"{path}: section {tag} truncated")
        sections[tag] = body
        i += 1 + count
    if "N" not in sections or "T" not in sections:
        raise MeshParseError(f"{path}: missing N or T section")
    return sections


def load_mesh_and_layout(path):
    """Read a mesh file; returns ``(mesh, layout_or_None)``."""
    sec = _parse(path)
    try:
        nodes = np.array([[float(v) for v in tok] for _, tok in sec["N"]])
        if any(len(tok) != 2 for _, tok in sec["N"]):
            raise ValueError
    except ValueError:
        raise MeshParseError(f"{path}: malformed node line") from None
    try:
        tris = np.array([[int(v) for v in tok] for _, tok in sec["T"]], dtype=np.int64)
        if any(len(tok) != 3 for _, tok in sec["T"]):
            raise ValueError
    except ValueError:
        raise MeshParseError(f"{path}: malformed triangle line") from None
    mesh = Mesh(nodes, tris)
    layout = None
    if "E" in sec:
        try:
            groups = [np.array([int(v) for v in tok]) for _, tok in sec["E"]]
        except ValueError:
            raise MeshParseError(f"{path}: malformed electrode line") from None
        layout = ElectrodeLayout(tuple(groups)).validate(mesh)
    return mesh, layout


def load_mesh(path):
    return load_mesh_and_layout(path)[0]
