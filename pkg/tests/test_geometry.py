"""Geometry primitives against independent oracles (Heron areas, BFS components)."""

import numpy as np
import pytest

from ipsr.geometry import (
    BBox,
    TriangleMesh,
    as_points,
    connected_components,
    empty_mesh,
    face_area_normal,
    normalize_to_domain,
    unique_edges,
)


def test_as_points_validates_shape_and_finiteness():
    assert as_points([[0, 0, 0]]).shape == (1, 3)
    with pytest.raises(ValueError):
        as_points([[0, 0]])
    with pytest.raises(ValueError):
        as_points([[0.0, np.nan, 0.0]])
    assert as_points([[1, 2]], dim=2).shape == (1, 2)


def test_bbox_diagonal():
    box = BBox.of([[0, 0, 0], [1, 2, 2]])
    assert box.diagonal == pytest.approx(3.0)


def test_normalize_to_domain_bounds_and_roundtrip():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-5.0, 3.0, (200, 3)) * [1.0, 0.3, 2.0]
    unit, transform = normalize_to_domain(pts, padding=0.15)
    assert unit.min() >= 0.15 - 1e-12
    assert unit.max() <= 0.85 + 1e-12
    longest_axis = np.argmax(pts.max(axis=0) - pts.min(axis=0))
    ext = unit.max(axis=0) - unit.min(axis=0)
    assert ext[longest_axis] == pytest.approx(0.7)
    back = transform.to_world(unit)
    np.testing.assert_allclose(back, pts, atol=1e-12)


def test_normalize_rejects_degenerate_and_bad_padding():
    with pytest.raises(ValueError):
        normalize_to_domain(np.zeros((5, 3)))
    with pytest.raises(ValueError):
        normalize_to_domain([[0, 0, 0], [1, 1, 1]], padding=0.5)


def _heron(a, b, c):
    la = np.linalg.norm(b - a)
    lb = np.linalg.norm(c - b)
    lc = np.linalg.norm(a - c)
    s = 0.5 * (la + lb + lc)
    return np.sqrt(max(s * (s - la) * (s - lb) * (s - lc), 0.0))


def test_face_area_matches_heron_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        v = rng.normal(size=(3, 3))
        area, normal = face_area_normal(v[0], v[1], v[2])
        assert area == pytest.approx(_heron(*v), rel=1e-9)
        assert np.linalg.norm(normal) == pytest.approx(1.0)
        for edge in (v[1] - v[0], v[2] - v[0]):
            assert abs(normal @ edge) < 1e-9 * max(1.0, np.linalg.norm(edge))


def test_face_area_degenerate_is_flagged_zero():
    area, normal = face_area_normal(np.zeros(3), np.ones(3), 2 * np.ones(3))
    assert area == 0.0
    assert np.all(normal == 0.0)


def test_mesh_build_caches_and_flags():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], dtype=float)
    faces = np.array([[0, 1, 2], [0, 1, 3]])
    mesh = TriangleMesh.build(verts, faces)
    assert mesh.n_vertices == 4 and mesh.n_faces == 2
    assert mesh.face_areas[0] == pytest.approx(0.5)
    assert bool(mesh.degenerate[0]) is False
    assert bool(mesh.degenerate[1]) is True
    assert mesh.total_area() == pytest.approx(0.5)
    np.testing.assert_allclose(mesh.centroids()[0], [1 / 3, 1 / 3, 0.0])


def test_unique_edges_counts_tetrahedron():
    faces = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    edges, counts = unique_edges(faces)
    assert len(edges) == 6
    assert np.all(counts == 2)
    assert np.all(edges[:, 0] < edges[:, 1])


def _bfs_components(faces):
    """Flood-fill oracle over edge-shared faces."""
    edge_owner: dict[tuple[int, int], list[int]] = {}
    for fi, (a, b, c) in enumerate(faces):
        for e in ((a, b), (b, c), (c, a)):
            edge_owner.setdefault(tuple(sorted(e)), []).append(fi)
    adj: list[set[int]] = [set() for _ in faces]
    for owners in edge_owner.values():
        for i in owners:
            for j in owners:
                if i != j:
                    adj[i].add(j)
    seen = [False] * len(faces)
    comps = []
    for start in range(len(faces)):
        if seen[start]:
            continue
        queue = [start]
        seen[start] = True
        comp = []
        while queue:
            f = queue.pop()
            comp.append(f)
            for g in adj[f]:
                if not seen[g]:
                    seen[g] = True
                    queue.append(g)
        comps.append(sorted(comp))
    return comps


def test_connected_components_match_bfs_oracle():
    # two tetrahedra with disjoint vertex ranges plus one floating triangle
    tet = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    faces = np.vstack([tet, tet + 4, [[8, 9, 10]]])
    verts = np.random.default_rng(0).normal(size=(11, 3))
    mesh = TriangleMesh.build(verts, faces)
    got = [sorted(c.tolist()) for c in connected_components(mesh)]
    assert got == _bfs_components(faces)
    assert len(got) == 3


def test_connected_components_empty_mesh():
    assert connected_components(empty_mesh()) == []
