import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fereit.mesh import (LayoutError, Mesh, MeshIndexError, MeshParseError, MeshTopologyError,
                         assign_electrodes, boundary_elements, coarsen, generate_disk_mesh,
                         load_mesh, load_mesh_and_layout, refine, refine_layout, save_mesh)

SQUARE_NODES = [[0, 0], [1, 0], [1, 1], [0, 1]]
SQUARE_TRIS = [[0, 1, 2], [0, 2, 3]]


def square():
    return Mesh(SQUARE_NODES, SQUARE_TRIS)


def edge_counts(mesh):
    counts = {}
    for t in mesh.triangles:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            e = (min(a, b), max(a, b))
            counts[e] = counts.get(e, 0) + 1
    return counts


def check_invariants(mesh):
    assert np.all(mesh.areas > 0)
    counts = edge_counts(mesh)
    assert set(counts.values()) <= {1, 2}
    bnd = {e for e, c in counts.items() if c == 1}
    loop = mesh.boundary_loop
    walked = {(min(a, b), max(a, b)) for a, b in zip(loop, np.roll(loop, -1))}
    assert walked == bnd
    assert len(set(loop.tolist())) == len(loop)
    assert mesh.total_area() == pytest.approx(mesh.boundary_polygon_area(), rel=1e-12)


class TestGenerate:
    def test_coarsest(self):
        m = generate_disk_mesh(1, 0.5)
        assert m.n_elem >= 4
        check_invariants(m)

    def test_area_close_to_circle(self):
        m = generate_disk_mesh(1, 0.05)
        check_invariants(m)
        assert 1000 <= m.n_elem < 10000
        assert m.total_area() == pytest.approx(math.pi, rel=0.02)

    def test_boundary_nodes_on_circle(self):
        m = generate_disk_mesh(2.0, 0.2)
        r = np.linalg.norm(m.nodes[m.boundary_loop], axis=1)
        np.testing.assert_allclose(r, 2.0, rtol=1e-14)

    def test_loop_is_counterclockwise(self):
        m = generate_disk_mesh(1, 0.1)
        assert m.boundary_polygon_area() > 0

    @pytest.mark.parametrize("r,h", [(1, 0), (1, -0.1), (0, 0.1), (1, 1.0), (1, 2.0)])
    def test_rejects_bad_input(self, r, h):
        with pytest.raises(ValueError):
            generate_disk_mesh(r, h)

    def test_deterministic(self):
        a, b = generate_disk_mesh(1, 0.07), generate_disk_mesh(1, 0.07)
        assert np.array_equal(a.nodes, b.nodes)
        assert np.array_equal(a.triangles, b.triangles)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.03, 0.4))
    def test_invariants_hold(self, h):
        check_invariants(generate_disk_mesh(1.0, h))


class TestLoad:
    def test_minimal_square(self, tmp_path):
        p = tmp_path / "sq.txt"
        p.write_text("# unit square\nN 4\n0 0\n1 0\n1 1\n0 1\nT 2\n0 1 2\n0 2 3\n")
        m = load_mesh(p)
        assert m.n_elem == 2
        assert m.total_area() == pytest.approx(1.0)

    def test_zero_area_triangle(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("N 4\n0 0\n1 0\n2 0\n0 1\nT 2\n0 1 2\n0 1 3\n")
        with pytest.raises(MeshTopologyError):
            load_mesh(p)

    def test_clockwise_triangle(self):
        with pytest.raises(MeshTopologyError):
            Mesh(SQUARE_NODES, [[0, 2, 1], [0, 2, 3]])

    def test_out_of_range(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("N 3\n0 0\n1 0\n0 1\nT 1\n0 1 5\n")
        with pytest.raises(MeshIndexError):
            load_mesh(p)

    def test_non_conforming(self):
        # three triangles on one edge
        nodes = [[0, 0], [1, 0], [0.5, 1], [0.5, -1], [0.5, 0.5]]
        with pytest.raises(MeshTopologyError):
            Mesh(nodes, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])

    @pytest.mark.parametrize("text", [
        "N 2\n0 0\n",
        "N 3\n0 0\n1 x\n0 1\nT 1\n0 1 2\n",
        "N 3\n0 0\n1 0\n0 1\nT 1\n0 1\n",
        "Q 3\n",
        "N 3\n0 0\n1 0\n0 1\n",
    ])
    def test_parse_errors(self, tmp_path, text):
        p = tmp_path / "bad.txt"
        p.write_text(text)
        with pytest.raises(MeshParseError):
            load_mesh(p)

    def test_round_trip(self, tmp_path):
        m = generate_disk_mesh(1, 0.1)
        layout = assign_electrodes(m, 16, 0.5)
        p = tmp_path / "disk.txt"
        save_mesh(m, p, layout)
        m2, layout2 = load_mesh_and_layout(p)
        assert np.array_equal(m.nodes, m2.nodes)
        assert np.array_equal(m.triangles, m2.triangles)
        assert all(np.array_equal(a, b) for a, b in zip(layout.groups, layout2.groups))


def boundary_walk_groups(mesh, layout):
    """Independent check: walk the loop once and collect consecutive electrode runs."""
    owner = {int(n): e for e, g in enumerate(layout.groups) for n in g}
    loop = [int(n) for n in mesh.boundary_loop]
    # start the walk just after a gap
    start = next(i for i, n in enumerate(loop) if n not in owner)
    loop = loop[start:] + loop[:start]
    runs = []
    for n in loop:
        if n in owner:
            if runs and runs[-1][0] == owner[n] and runs[-1][1][-1] == prev:
                runs[-1][1].append(n)
            else:
                runs.append((owner[n], [n]))
        prev = n
    return runs


class TestElectrodes:
    def test_160_boundary_nodes(self):
        m = generate_disk_mesh(1, 0.04, symmetry=16)
        assert len(m.boundary_loop) == 160
        layout = assign_electrodes(m, 16, 0.5)
        runs = boundary_walk_groups(m, layout)
        assert len(runs) == 16
        order = [e for e, _ in runs]
        k = order.index(0)
        assert order[k:] + order[:k] == list(range(16))
        assert all(4 <= len(nodes) <= 6 for _, nodes in runs)
        # angular centres equally spaced by 2 pi / 16
        centres = [np.angle(np.exp(1j * np.arctan2(*m.nodes[g][:, ::-1].T)).mean()) for g in layout.groups]
        steps = np.mod(np.diff(np.r_[centres, centres[0]]), 2 * np.pi)
        np.testing.assert_allclose(steps, 2 * np.pi / 16, atol=1e-9)

    def test_nearly_full_coverage_stays_disjoint(self):
        m = generate_disk_mesh(1, 0.03, symmetry=16)
        layout = assign_electrodes(m, 16, 0.999)
        nodes = np.concatenate(layout.groups)
        assert len(np.unique(nodes)) == len(nodes)
        # at least one uncovered boundary edge between neighbours
        pos = {int(n): i for i, n in enumerate(m.boundary_loop)}
        B = len(m.boundary_loop)
        for e in range(16):
            last, first = layout.groups[e][-1], layout.groups[(e + 1) % 16][0]
            assert (pos[int(first)] - pos[int(last)]) % B >= 1

    def test_too_coarse(self):
        nodes = [[0, 0]] + [[np.cos(t), np.sin(t)] for t in 2 * np.pi * np.arange(20) / 20]
        tris = [[0, 1 + i, 1 + (i + 1) % 20] for i in range(20)]
        m = Mesh(nodes, tris)
        assert len(m.boundary_loop) == 20
        with pytest.raises(LayoutError):
            assign_electrodes(m, 16, 0.5)

    def test_independent_of_node_numbering(self):
        m = generate_disk_mesh(1, 0.05)
        a = assign_electrodes(m, 16, 0.5)
        # relabel nodes so the boundary loop starts at a different node
        perm = np.random.default_rng(3).permutation(m.n_nodes)
        inv = np.argsort(perm)
        m2 = Mesh(m.nodes[perm], inv[m.triangles])
        assert perm[m2.boundary_loop[0]] != m.boundary_loop[0]
        b = assign_electrodes(m2, 16, 0.5)
        for ga, gb in zip(a.groups, b.groups):
            assert perm[gb].tolist() == ga.tolist()


class TestRefine:
    def test_square(self):
        f = refine(square())
        assert f.n_elem == 8
        assert f.n_nodes == 4 + 5
        check_invariants(f)

    def test_twice(self):
        m = square()
        assert refine(refine(m)).n_elem == 16 * m.n_elem

    def test_area_and_node_count(self):
        m = generate_disk_mesh(1, 0.1)
        f = refine(m)
        check_invariants(f)
        assert f.n_nodes == m.n_nodes + len(edge_counts(m))
        assert f.total_area() == pytest.approx(m.total_area(), rel=1e-14)
        np.testing.assert_allclose(np.bincount(f.parent, f.areas), m.areas, rtol=1e-12)

    def test_parent_contains_child(self):
        m = generate_disk_mesh(1, 0.2)
        f = refine(m)
        for k in range(0, f.n_elem, 7):
            p = m.nodes[m.triangles[f.parent[k]]]
            c = f.centroids[k]
            A = np.column_stack([p[1] - p[0], p[2] - p[0]])
            l = np.linalg.solve(A, c - p[0])
            assert l.min() > 0 and l.sum() < 1

    def test_coarsen_constant(self):
        f = refine(generate_disk_mesh(1, 0.2))
        np.testing.assert_allclose(coarsen(np.full(f.n_elem, 3.0), f), 3.0)

    def test_layout_transfer(self):
        m = generate_disk_mesh(1, 0.05)
        layout = assign_electrodes(m)
        f = refine(m)
        fl = refine_layout(layout, f)
        for g, fg in zip(layout.groups, fl.groups):
            assert len(fg) == 2 * len(g) - 1
            assert np.array_equal(fg[::2], g)
        # electrode arclength unchanged
        def length(mesh, g):
            return np.linalg.norm(np.diff(mesh.nodes[g], axis=0), axis=1).sum()
        for g, fg in zip(layout.groups, fl.groups):
            assert length(f, fg) == pytest.approx(length(m, g), rel=1e-12)


def brute_boundary_elements(mesh):
    counts = edge_counts(mesh)
    out = []
    for k, t in enumerate(mesh.triangles):
        es = [(min(a, b), max(a, b)) for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))]
        if any(counts[e] == 1 for e in es):
            out.append(k)
    return out


class TestBoundaryElements:
    def test_square(self):
        assert boundary_elements(square()).tolist() == [0, 1]

    def test_disk_matches_edge_scan(self):
        m = generate_disk_mesh(1, 0.05)
        got = boundary_elements(m)
        assert got.tolist() == brute_boundary_elements(m)
        # each boundary edge has one owner; disk elements rarely own two
        assert len(m.boundary_loop) * 0.9 <= len(got) <= len(m.boundary_loop)

    def test_single_node_contact_excluded(self):
        m = generate_disk_mesh(1, 0.1)
        bnodes = set(m.boundary_loop.tolist())
        got = set(boundary_elements(m).tolist())
        touching = [k for k, t in enumerate(m.triangles) if sum(int(n) in bnodes for n in t) == 1]
        assert touching
        assert not got.intersection(touching)

    def test_subset_of_node_incident(self):
        m = generate_disk_mesh(1, 0.08)
        bnodes = set(m.boundary_loop.tolist())
        for k in boundary_elements(m):
            assert any(int(n) in bnodes for n in m.triangles[k])


def test_arrays_are_read_only():
    m = generate_disk_mesh(1, 0.2)
    with pytest.raises(ValueError):
        m.nodes[0, 0] = 5.0
