"""Face linking, normal voting, convergence stat, and initializers."""

import numpy as np
import pytest

from conftest import hull_vertices_oracle, sphere_field, sphere_points
from ipsr.geometry import TriangleMesh
from ipsr.isosurface import marching_cubes
from ipsr.orient import (
    FaceLinks,
    convergence_stat,
    link_faces,
    quickhull3,
    update_normals,
    visibility_init,
)
from ipsr.sampling import SampleSet, build_samples, random_init
from ipsr.spatial import KdTree


def _samples_at(positions, normals=None):
    pos = np.asarray(positions, dtype=np.float64)
    if normals is None:
        normals = np.zeros_like(pos)
    return SampleSet(pos, np.asarray(normals, dtype=np.float64),
                     np.ones(len(pos), dtype=np.int64), len(pos))


def _two_face_mesh():
    verts = np.array([
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 2.0],
        [2.0, 0.0, 0.0],
    ])
    faces = np.array([[0, 1, 2], [0, 3, 4]])
    return TriangleMesh.build(verts, faces)


def test_link_single_face_single_sample():
    mesh = TriangleMesh.build(
        np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        np.array([[0, 1, 2]]),
    )
    tree = KdTree.build(np.array([[0.3, 0.3, 0.0]]))
    links = link_faces(mesh, tree, 10)
    assert links.k == 1
    np.testing.assert_array_equal(links.faces_for(0), [0])
    np.testing.assert_array_equal(links.counts(), [1])


def test_link_matches_brute_force_nearest():
    rng = np.random.default_rng(3)
    pos = rng.uniform(0.0, 1.0, (20, 3))
    mesh = TriangleMesh.build(
        np.array([[0.4, 0.4, 0.4], [0.6, 0.4, 0.4], [0.4, 0.6, 0.4]]),
        np.array([[0, 1, 2]]),
    )
    tree = KdTree.build(pos)
    links = link_faces(mesh, tree, 10)
    d2 = ((pos - mesh.centroids()[0]) ** 2).sum(axis=1)
    nearest = set(np.lexsort((np.arange(20), d2))[:10].tolist())
    got = {i for i in range(20) if len(links.faces_for(i))}
    assert got == nearest
    total = sum(len(links.faces_for(i)) for i in range(20))
    assert total == 10


def test_link_total_length_and_order():
    pts = sphere_points(300, 2, radius=0.3) + 0.5
    samples = build_samples(pts, 5)
    mesh = marching_cubes(sphere_field(32), 0.0)
    tree = KdTree.build(samples.positions)
    links = link_faces(mesh, tree, 7)
    assert links.face_ids.shape[0] == mesh.n_faces * 7
    assert links.counts().sum() == mesh.n_faces * 7
    for i in range(0, samples.n, 37):
        ids = links.faces_for(i)
        assert np.all(np.diff(ids) > 0)


def test_link_empty_mesh():
    from ipsr.geometry import empty_mesh

    tree = KdTree.build(np.random.default_rng(0).uniform(size=(5, 3)))
    links = link_faces(empty_mesh(), tree, 4)
    assert links.counts().sum() == 0
    np.testing.assert_array_equal(links.faces_for(2), [])


def test_update_normals_area_weighted_oracle():
    mesh = _two_face_mesh()
    np.testing.assert_allclose(mesh.face_areas, [0.5, 2.0])
    np.testing.assert_allclose(mesh.face_normals, [[0, 0, 1], [0, 1, 0]], atol=1e-15)
    samples = _samples_at([[0.1, 0.1, 0.1], [0.9, 0.9, 0.9]],
                          [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    links = FaceLinks(np.array([0, 2, 2]), np.array([0, 1]), 2, 2)
    updated = update_normals(samples, mesh, links)
    expected0 = np.array([0.0, 2.0, 0.5])
    expected0 /= np.linalg.norm(expected0)
    np.testing.assert_allclose(updated.normals[0], expected0, atol=1e-12)
    # sample 1 had no linked faces and keeps its previous normal
    np.testing.assert_array_equal(updated.normals[1], [1.0, 0.0, 0.0])


def test_update_normals_canceling_votes_keep_previous():
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    mesh = TriangleMesh.build(verts, np.array([[0, 1, 2], [0, 2, 1]]))
    samples = _samples_at([[0.2, 0.2, 0.0]], [[0.0, 1.0, 0.0]])
    links = FaceLinks(np.array([0, 2]), np.array([0, 1]), 1, 2)
    updated = update_normals(samples, mesh, links)
    np.testing.assert_array_equal(updated.normals[0], [0.0, 1.0, 0.0])


def test_update_normals_sample_count_mismatch():
    mesh = _two_face_mesh()
    samples = _samples_at([[0.1, 0.1, 0.1]])
    links = FaceLinks(np.array([0, 1, 2]), np.array([0, 1]), 2, 1)
    with pytest.raises(ValueError):
        update_normals(samples, mesh, links)


def test_convergence_stat_top_fraction_oracle():
    rng = np.random.default_rng(6)
    n = 3000
    prev = rng.normal(size=(n, 3))
    prev /= np.linalg.norm(prev, axis=1, keepdims=True)
    new = prev.copy()
    bumps = {10: 0.9, 500: 0.7, 1500: 0.5, 2200: 0.3}
    for i, size in bumps.items():
        tweak = new[i] + size * np.array([1.0, 0.0, 0.0])
        new[i] = tweak / np.linalg.norm(tweak)
    diffs = np.linalg.norm(new - prev, axis=1)
    top = int(np.ceil(0.001 * n))
    assert top == 3
    expected = float(np.sort(diffs)[-top:].mean())
    stat = convergence_stat(prev, new)
    assert stat.d == pytest.approx(expected, abs=1e-12)
    assert stat.diffs.shape == (n,)
    assert stat.d <= 2.0


def test_convergence_stat_identical_and_errors():
    a = np.eye(3)
    assert convergence_stat(a, a).d == 0.0
    with pytest.raises(ValueError):
        convergence_stat(a, np.eye(4))
    with pytest.raises(ValueError):
        convergence_stat(np.zeros(3), np.zeros(3))


def test_single_vote_update_recovers_sphere_normals():
    # one linking + voting pass against an exact mesh barely moves
    # already-correct inward normals
    pts = sphere_points(2000, 4, radius=0.3) + 0.5
    samples = build_samples(pts, 6)
    rel = samples.positions - 0.5
    truth = -rel / np.linalg.norm(rel, axis=1, keepdims=True)
    samples = samples.with_normals(truth)
    mesh = marching_cubes(sphere_field(64), 0.0)
    tree = KdTree.build(samples.positions)
    links = link_faces(mesh, tree, 10)
    updated = update_normals(samples, mesh, links)
    dots = np.clip((updated.normals * truth).sum(axis=1), -1.0, 1.0)
    mean_deg = np.degrees(np.arccos(dots)).mean()
    assert mean_deg < 10.0


def test_visibility_init_beats_random_on_sphere():
    pts = sphere_points(2000, 7, radius=0.3) + 0.5
    samples = build_samples(pts, 6)
    rel = samples.positions - 0.5
    truth = -rel / np.linalg.norm(rel, axis=1, keepdims=True)

    vis = visibility_init(samples)
    np.testing.assert_allclose(np.linalg.norm(vis.normals, axis=1), 1.0, atol=1e-9)
    vis_dots = np.clip((vis.normals * truth).sum(axis=1), -1.0, 1.0)
    vis_deg = np.degrees(np.arccos(vis_dots)).mean()

    rnd = random_init(samples, 0)
    rnd_dots = np.clip((rnd.normals * truth).sum(axis=1), -1.0, 1.0)
    rnd_deg = np.degrees(np.arccos(rnd_dots)).mean()

    assert vis_deg < 60.0
    assert vis_deg < rnd_deg


def test_visibility_init_degenerate_falls_back_to_random():
    flat = np.random.default_rng(0).uniform(0.2, 0.8, (50, 3))
    flat[:, 2] = 0.5
    samples = _samples_at(flat)
    with pytest.warns(UserWarning):
        out = visibility_init(samples)
    expected = random_init(samples, 0)
    np.testing.assert_array_equal(out.normals, expected.normals)


def test_quickhull_cube_corners():
    corners = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)])
    interior = np.random.default_rng(1).uniform(0.2, 0.8, (20, 3))
    pts = np.vstack([corners, interior])
    np.testing.assert_array_equal(quickhull3(pts), np.arange(8))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_quickhull_matches_brute_force(seed):
    pts = np.random.default_rng(seed).uniform(0.0, 1.0, (50, 3))
    got = quickhull3(pts)
    expected = hull_vertices_oracle(pts)
    np.testing.assert_array_equal(got, expected)


def test_quickhull_rejects_degenerate_input():
    with pytest.raises(ValueError):
        quickhull3(np.zeros((3, 3)))
    flat = np.random.default_rng(2).uniform(size=(30, 3))
    flat[:, 1] = 0.25
    with pytest.raises(ValueError):
        quickhull3(flat)
