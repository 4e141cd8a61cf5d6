"""Iso-surface extraction on the node grid by marching cubes.

The 256-entry case table is generated at import time rather than
transcribed. For each sign pattern, every cube face contributes directed
iso-chords: walking the face's corners counter-clockwise as seen from
outside the cell, each positive-to-negative crossing connects back to the
crossing that opened its run of positive corners. On an ambiguous face
(two diagonal positive corners) this always cuts the positive corners
apart, a fixed choice that is identical seen from both adjacent cells, so
the chords close into loops and neighboring cells always agree. Loops are
fan-triangulated, and one global winding flip fixes normals to point toward
increasing field values.

Vertices are keyed by grid edge (lower node, axis), so shared vertices are
welded exactly and the mesh is watertight whenever the surface stays inside
the grid.
"""

from __future__ import annotations

import numpy as np

from .geometry import TriangleMesh, empty_mesh
from .poisson import GridField, eval_trilinear
from .sampling import SampleSet

_CYCLIC = {0: (1, 2), 1: (2, 0), 2: (0, 1)}


def _build_edges():
    edges = []
    for c in range(8):
        for axis in range(3):
            if not (c >> axis) & 1:
                edges.append((c, axis))
    return edges

_EDGES = _build_edges()
_EDGE_ID = {e: i for i, e in enumerate(_EDGES)}
_EDGE_AXIS = np.array([a for _, a in _EDGES], dtype=np.int64)
_EDGE_LO = np.array([[(c >> 0) & 1, (c >> 1) & 1, (c >> 2) & 1] for c, _ in _EDGES], dtype=np.int64)


def _face_chords(mask: int) -> dict[int, int]:
    """Directed iso-chords of one sign pattern, keyed by source edge."""
    chords: dict[int, int] = {}
    for f_axis in range(3):
        for side in (0, 1):
            u, v = _CYCLIC[f_axis]
            if side == 0:
                u, v = v, u
            corners = [
                (side << f_axis) | (du << u) | (dv << v)
                for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1))
            ]
            crossings = []
            for i in range(4):
                a = corners[i]
                b = corners[(i + 1) % 4]
                pa = (mask >> a) & 1
                if pa != (mask >> b) & 1:
                    axis = (a ^ b).bit_length() - 1
                    crossings.append((_EDGE_ID[(a & b, axis)], bool(pa)))
            for j, (eid, is_exit) in enumerate(crossings):
                if is_exit:
                    # crossing types alternate, so the predecessor is an enter
                    chords[eid] = crossings[(j - 1) % len(crossings)][0]
    return chords


def _case_triangles(mask: int) -> list[tuple[int, int, int]]:
    chords = _face_chords(mask)
    tris = []
    seen: set[int] = set()
    for start in sorted(chords):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = chords[start]
        while cur != start:
            loop.append(cur)
            seen.add(cur)
            cur = chords[cur]
        for i in range(1, len(loop) - 1):
            tris.append((loop[0], loop[i], loop[i + 1]))
    return tris


def _edge_midpoint(eid: int) -> np.ndarray:
    p = _EDGE_LO[eid].astype(np.float64)
    p[_EDGE_AXIS[eid]] += 0.5
    return p


def _build_table():
    table = [_case_triangles(mask) for mask in range(256)]
    # fix the global winding so normals face the positive corner of case 1
    t0 = table[1][0]
    p = [_edge_midpoint(e) for e in t0]
    n = np.cross(p[1] - p[0], p[2] - p[0])
    centroid = (p[0] + p[1] + p[2]) / 3.0
    if float(np.dot(n, -centroid)) < 0.0:
        table = [[(a, c, b) for a, b, c in tris] for tris in table]
    n_tris = np.array([len(t) for t in table], dtype=np.int64)
    width = int(n_tris.max())
    packed = np.full((256, width, 3), -1, dtype=np.int64)
    for mask, tris in enumerate(table):
        for t, tri in enumerate(tris):
            packed[mask, t] = tri
    return packed, n_tris

_TRI_TABLE, _N_TRIS = _build_table()


def marching_cubes(field: GridField, iso: float) -> TriangleMesh:
    """Extract the iso-surface of a grid field as a triangle mesh.

    A node is inside when its value exceeds iso; face normals point toward
    increasing field values. An iso level outside the field's range yields
    an empty mesh. Vertex and face order depend only on the field, so
    repeated extraction is bit-identical.
    """
    v = field.values
    res = field.resolution
    h = field.h
    inside = v > iso
    if not inside.any() or inside.all():
        return empty_mesh()

    sl = (slice(0, -1), slice(1, None))
    mask = np.zeros((res, res, res), dtype=np.int64)
    for c in range(8):
        mask += inside[sl[c & 1], sl[(c >> 1) & 1], sl[(c >> 2) & 1]] << c
    ci, cj, ck = np.nonzero((mask > 0) & (mask < 255))
    if len(ci) == 0:
        return empty_mesh()
    case = mask[ci, cj, ck]

    # vertex ids per crossing grid edge, numbered x-edges, y-edges, z-edges
    vmaps = []
    pos_parts = []
    base = 0
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        crossing = inside[tuple(lo)] != inside[tuple(hi)]
        vmap = np.full(crossing.shape, -1, dtype=np.int64)
        count = int(crossing.sum())
        vmap[crossing] = base + np.arange(count)
        base += count
        vmaps.append(vmap)
        ii, jj, kk = np.nonzero(crossing)
        node = np.stack([ii, jj, kk], axis=1).astype(np.float64)
        va = v[ii, jj, kk]
        step = [0, 0, 0]
        step[axis] = 1
        vb = v[ii + step[0], jj + step[1], kk + step[2]]
        t = (iso - va) / (vb - va)
        node[:, axis] += t
        pos_parts.append(node * h)
    vertices = np.concatenate(pos_parts, axis=0)

    face_parts = []
    cell_keys = []
    tri_keys = []
    cell_lin = (ci * res + cj) * res + ck
    for cs in np.unique(case):
        sel = np.flatnonzero(case == cs)
        bi, bj, bk = ci[sel], cj[sel], ck[sel]
        for t in range(_N_TRIS[cs]):
            tri = np.empty((len(sel), 3), dtype=np.int64)
            for corner in range(3):
                eid = _TRI_TABLE[cs, t, corner]
                off = _EDGE_LO[eid]
                tri[:, corner] = vmaps[_EDGE_AXIS[eid]][bi + off[0], bj + off[1], bk + off[2]]
            face_parts.append(tri)
            cell_keys.append(cell_lin[sel])
            tri_keys.append(np.full(len(sel), t, dtype=np.int64))
    faces = np.concatenate(face_parts, axis=0)
    order = np.lexsort((np.concatenate(tri_keys), np.concatenate(cell_keys)))
    return TriangleMesh.build(vertices, faces[order])


def mean_sample_value(field: GridField, samples: SampleSet) -> float:
    """Mean field value over the sample positions (the extraction level)."""
    return float(np.mean(eval_trilinear(field, samples.positions)))
