"""Normal estimation from a candidate surface.

Each extracted face votes, weighted by its area, for the normals of the k
samples nearest its centroid; a sample's new normal is the normalized vote
sum. Convergence is measured by the mean distance between old and new
normals over the worst 0.1% of samples. Also provides the hidden-point
visibility initialization (spherical flip plus convex hull) and the hull
helper it relies on.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geometry import BBox, TriangleMesh, as_points
from .sampling import SampleSet, random_init
from .spatial import KdTree

COPLANAR_TOL = 1e-10


@dataclass
class FaceLinks:
    """Per-sample face-index lists in compressed form.

    Sample i's faces are face_ids[offsets[i]:offsets[i+1]], ascending.
    """

    offsets: np.ndarray
    face_ids: np.ndarray
    n_samples: int
    k: int

    def faces_for(self, sample: int) -> np.ndarray:
        return self.face_ids[self.offsets[sample]:self.offsets[sample + 1]]

    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)


def link_faces(mesh: TriangleMesh, tree: KdTree, k: int) -> FaceLinks:
    """Attach every face to the k samples nearest its centroid."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = tree.n
    if mesh.n_faces == 0:
        return FaceLinks(np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), n, min(k, n))
    idx, _ = tree.knn_batch(mesh.centroids(), k)
    kk = idx.shape[1]
    sample_ids = idx.ravel()
    face_ids = np.repeat(np.arange(mesh.n_faces, dtype=np.int64), kk)
    order = np.lexsort((face_ids, sample_ids))
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(sample_ids, minlength=n), out=offsets[1:])
    return FaceLinks(offsets, face_ids[order], n, kk)


def accumulate_unit_normals(
    n_targets: int,
    target_idx: np.ndarray,
    weighted: np.ndarray,
    previous: np.ndarray,
    eps: float = 1e-12,
) -> np.ndarray:
    """Sum weighted vectors per target and normalize; fall back to `previous`
    where the sum (or the target's vote list) vanishes. Dimension-generic."""
    dim = weighted.shape[1]
    acc = np.zeros((n_targets, dim))
    for comp in range(dim):
        acc[:, comp] = np.bincount(target_idx, weights=weighted[:, comp], minlength=n_targets)
    norms = np.linalg.norm(acc, axis=1)
    out = acc / np.maximum(norms, 1e-300)[:, None]
    stale = norms < eps
    out[stale] = previous[stale]
    return out


def update_normals(samples: SampleSet, mesh: TriangleMesh, links: FaceLinks) -> SampleSet:
    """Area-weighted normal vote over each sample's linked faces."""
    if links.n_samples != samples.n:
        raise ValueError("links were built for a different sample set")
    weighted = mesh.face_areas[:, None] * mesh.face_normals
    entry_sample = np.repeat(np.arange(samples.n, dtype=np.int64), links.counts())
    new = accumulate_unit_normals(
        samples.n, entry_sample, weighted[links.face_ids], samples.normals
    )
    return samples.with_normals(new)


@dataclass
class ConvergenceStat:
    d: float
    diffs: np.ndarray


def convergence_stat(prev_normals: np.ndarray, new_normals: np.ndarray) -> ConvergenceStat:
    """Mean Euclidean normal change over the worst 0.1% of samples."""
    prev = np.asarray(prev_normals, dtype=np.float64)
    new = np.asarray(new_normals, dtype=np.float64)
    if prev.shape != new.shape or prev.ndim != 2:
        raise ValueError("normal arrays must share one (n, dim) shape")
    diffs = np.linalg.norm(new - prev, axis=1)
    top = max(1, int(np.ceil(0.001 * len(diffs))))
    worst = np.partition(diffs, len(diffs) - top)[-top:]
    return ConvergenceStat(float(worst.mean()), diffs)


def _viewpoints() -> np.ndarray:
    """26 viewpoints: corners, edge midpoints, and face centers of the
    concentric cube with edge length 3."""
    pts = []
    for dx in (-1.5, 0.0, 1.5):
        for dy in (-1.5, 0.0, 1.5):
            for dz in (-1.5, 0.0, 1.5):
                if dx == dy == dz == 0.0:
                    continue
                pts.append((0.5 + dx, 0.5 + dy, 0.5 + dz))
    return np.array(pts)


def _coplanar(pts: np.ndarray) -> bool:
    if len(pts) < 3:
        return True
    diag = BBox.of(pts).diagonal
    if diag == 0.0:
        return True
    centered = pts - pts.mean(axis=0)
    _, _, vh = np.linalg.svd(centered, full_matrices=False)
    return float(np.abs(centered @ vh[-1]).max()) <= COPLANAR_TOL * diag


def visibility_init(samples: SampleSet, hpr_radius_exponent: float = 3.0) -> SampleSet:
    """Initialize normals from multi-viewpoint visibility.

    From each viewpoint, samples are spherically flipped and the ones landing
    on the convex hull of the flipped cloud (plus the origin) count as
    visible; a visible sample accumulates the unit ray from the viewpoint.
    Samples never visible keep the fixed fallback normal (1, 0, 0).
    Degenerate clouds (< 4 samples or coplanar) fall back to seeded random
    normals with a warning.
    """
    pos = samples.positions
    if samples.n < 4 or _coplanar(pos):
        warnings.warn("degenerate sample cloud: falling back to random normals")
        return random_init(samples, 0)
    acc = np.zeros((samples.n, 3))
    seen = np.zeros(samples.n, dtype=bool)
    for view in _viewpoints():
        q = pos - view
        dist = np.linalg.norm(q, axis=1)
        radius = 10.0 ** hpr_radius_exponent * float(dist.max())
        flipped = q * (2.0 * radius / dist - 1.0)[:, None]
        try:
            hull = ConvexHull(np.vstack([flipped, np.zeros(3)]))
        except QhullError:
            continue
        vis = hull.vertices[hull.vertices < samples.n]
        acc[vis] += q[vis] / dist[vis, None]
        seen[vis] = True
    norms = np.linalg.norm(acc, axis=1)
    ok = seen & (norms > 1e-12)
    normals = np.where(ok[:, None], acc / np.maximum(norms, 1e-300)[:, None], (1.0, 0.0, 0.0))
    return samples.with_normals(normals)


def quickhull3(points) -> np.ndarray:
    """Vertex indices of the 3d convex hull, ascending."""
    pts = as_points(points)
    if len(pts) < 4:
        raise ValueError("need at least 4 points for a 3d hull")
    if _coplanar(pts):
        raise ValueError("all points coplanar within tolerance")
    hull = ConvexHull(pts)
    return np.sort(hull.vertices.astype(np.int64))
