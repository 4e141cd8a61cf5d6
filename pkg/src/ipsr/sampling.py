"""Grid-cell sample construction and random normal initialization."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import as_points

MIN_DEPTH = 4
MAX_DEPTH = 10


@dataclass
class SampleSet:
    """Reconstruction samples: one position per occupied grid cell.

    positions lie strictly inside the unit cube; normals are unit vectors or
    zero while unset; source_counts records how many input points fell in
    each cell; m is the size of the original cloud.
    """

    positions: np.ndarray
    normals: np.ndarray
    source_counts: np.ndarray
    m: int

    @property
    def n(self) -> int:
        return len(self.positions)

    def with_normals(self, normals: np.ndarray) -> "SampleSet":
        nrm = as_points(normals, "normals", dim=self.positions.shape[1])
        if len(nrm) != self.n:
            raise ValueError("normal count does not match sample count")
        return replace(self, normals=nrm)


def build_samples(points, depth: int, point_vectors=None) -> SampleSet:
    """Collapse a unit-domain cloud to per-cell centroid samples.

    The domain is split into 2^depth cells per axis; each occupied cell
    produces one sample at the centroid of its points. Sample order follows
    ascending cell index (x-major), so rebuilding from the same cloud is
    bit-identical. When point_vectors is given (one vector per input point),
    each sample's normal is the renormalized per-cell average of them.
    """
    pts = as_points(points)
    if len(pts) == 0:
        raise ValueError("empty point cloud")
    if not MIN_DEPTH <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must lie in [{MIN_DEPTH}, {MAX_DEPTH}], got {depth}")
    if pts.min() < 0.0 or pts.max() > 1.0:
        raise ValueError("points must lie in the unit domain")
    res = 1 << depth
    cell = np.clip((pts * res).astype(np.int64), 0, res - 1)
    key = (cell[:, 0] * res + cell[:, 1]) * res + cell[:, 2]
    uniq, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
    acc = np.empty((len(uniq), 3))
    for axis in range(3):
        acc[:, axis] = np.bincount(inv, weights=pts[:, axis], minlength=len(uniq))
    positions = acc / counts[:, None]
    if point_vectors is None:
        normals = np.zeros_like(positions)
    else:
        vec = as_points(point_vectors, "point_vectors")
        if len(vec) != len(pts):
            raise ValueError("point_vectors count does not match point count")
        vac = np.empty((len(uniq), 3))
        for axis in range(3):
            vac[:, axis] = np.bincount(inv, weights=vec[:, axis], minlength=len(uniq))
        norms = np.linalg.norm(vac, axis=1, keepdims=True)
        normals = vac / np.maximum(norms, 1e-300)
        normals[norms[:, 0] == 0.0] = 0.0
    return SampleSet(positions, normals, counts.astype(np.int64), len(pts))


def random_init(samples: SampleSet, seed: int) -> SampleSet:
    """Assign independent uniform-random unit normals (normalized Gaussians)."""
    rng = np.random.default_rng(seed)
    g = rng.normal(size=samples.positions.shape)
    norms = np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    return samples.with_normals(g / norms)
