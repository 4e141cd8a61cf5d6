"""Geometric primitives: point-set validation, unit-domain mapping, triangle
meshes with cached per-face data, and face connectivity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _graph_components


def as_points(a, name: str = "points", dim: int = 3) -> np.ndarray:
    """Validate and convert to a float64 array of shape (n, dim)."""
    pts = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValueError(f"{name} must have shape (n, {dim}), got {pts.shape}")
    if pts.size and not np.isfinite(pts).all():
        raise ValueError(f"{name} contain non-finite values")
    return pts


@dataclass(frozen=True)
class BBox:
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def of(cls, points: np.ndarray) -> "BBox":
        pts = as_points(points)
        if len(pts) == 0:
            raise ValueError("empty point cloud has no bounding box")
        return cls(pts.min(axis=0), pts.max(axis=0))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))


@dataclass(frozen=True)
class DomainTransform:
    """Similarity map between world coordinates and the unit cube.

    unit = world * scale + offset; the inverse maps reconstruction output
    back to world coordinates. Uniform scaling, so directions (and therefore
    normals) are preserved.
    """

    scale: float
    offset: np.ndarray

    def to_unit(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.offset

    def to_world(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.offset) / self.scale


def normalize_to_domain(points, padding: float = 0.15, dim: int = 3):
    """Map a world-space cloud into [padding, 1-padding]^dim, preserving aspect.

    The longest bounding-box side is scaled to 1 - 2*padding and the cloud is
    centered in the unit cube. Returns (unit_points, transform).
    """
    pts = as_points(points, dim=dim)
    if len(pts) == 0:
        raise ValueError("empty point cloud")
    if not 0.0 < padding < 0.5:
        raise ValueError(f"padding must lie in (0, 0.5), got {padding}")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    longest = float((hi - lo).max())
    if longest == 0.0:
        raise ValueError("degenerate extent: all points coincide")
    scale = (1.0 - 2.0 * padding) / longest
    offset = 0.5 - 0.5 * (lo + hi) * scale
    return pts * scale + offset, DomainTransform(scale, offset)


def face_area_normal(v0, v1, v2, orientation_sign: float = 1.0):
    """Area and unit normal of one triangle.

    The normal follows the right-hand rule on (v0, v1, v2), multiplied by
    orientation_sign. A zero-area triangle gets area 0.0 and a null normal.
    """
    c = np.cross(np.subtract(v1, v0), np.subtract(v2, v0))
    norm = float(np.linalg.norm(c))
    if norm == 0.0:
        return 0.0, np.zeros(3)
    return 0.5 * norm, (orientation_sign / norm) * c


@dataclass
class TriangleMesh:
    """Indexed triangle mesh with cached areas and oriented unit normals.

    face_normals is zero on degenerate (zero-area) faces; the `degenerate`
    mask flags them. Degenerate faces are kept: dropping them would break
    edge-pairing checks downstream.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_areas: np.ndarray
    face_normals: np.ndarray
    degenerate: np.ndarray

    @classmethod
    def build(cls, vertices, faces, orientation_sign: float = 1.0) -> "TriangleMesh":
        verts = as_points(vertices, "vertices")
        fcs = np.ascontiguousarray(np.asarray(faces, dtype=np.int64))
        if fcs.ndim != 2 or fcs.shape[1] != 3:
            if fcs.size == 0:
                fcs = fcs.reshape(0, 3)
            else:
                raise ValueError(f"faces must have shape (m, 3), got {fcs.shape}")
        if fcs.size and (fcs.min() < 0 or fcs.max() >= len(verts)):
            raise ValueError("face indices out of range")
        v0 = verts[fcs[:, 0]]
        cross = np.cross(verts[fcs[:, 1]] - v0, verts[fcs[:, 2]] - v0)
        norms = np.linalg.norm(cross, axis=1)
        degenerate = norms == 0.0
        safe = np.where(degenerate, 1.0, norms)
        normals = (orientation_sign / safe)[:, None] * cross
        normals[degenerate] = 0.0
        return cls(verts, fcs, 0.5 * norms, normals, degenerate)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def centroids(self) -> np.ndarray:
        f = self.faces
        return (self.vertices[f[:, 0]] + self.vertices[f[:, 1]] + self.vertices[f[:, 2]]) / 3.0

    def total_area(self) -> float:
        return float(self.face_areas.sum())


def empty_mesh() -> TriangleMesh:
    return TriangleMesh.build(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


def unique_edges(faces: np.ndarray):
    """Undirected edge list of a face array.

    Returns (edges, counts): edges is (e, 2) with sorted vertex pairs, counts
    how many faces reference each edge.
    """
    if len(faces) == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
    raw = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    raw = np.sort(raw, axis=1)
    edges, counts = np.unique(raw, axis=0, return_counts=True)
    return edges, counts


def connected_components(mesh: TriangleMesh) -> list[np.ndarray]:
    """Face index arrays of edge-connected components.

    Two faces are adjacent when they share an undirected edge. Components are
    ordered by their smallest face index; faces within a component are
    ascending.
    """
    nf = mesh.n_faces
    if nf == 0:
        return []
    raw = np.sort(mesh.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    _, edge_id = np.unique(raw, axis=0, return_inverse=True)
    face_of = np.repeat(np.arange(nf), 3)
    order = np.argsort(edge_id, kind="stable")
    eid = edge_id[order]
    fid = face_of[order]
    same = eid[1:] == eid[:-1]
    a = fid[:-1][same]
    b = fid[1:][same]
    graph = coo_matrix((np.ones(len(a)), (a, b)), shape=(nf, nf))
    _, labels = _graph_components(graph, directed=False)
    _, first = np.unique(labels, return_index=True)
    out = []
    for lab in labels[np.sort(first)]:
        out.append(np.flatnonzero(labels == lab))
    return out
