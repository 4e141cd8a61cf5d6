"""Exact k-nearest-neighbor search over a static point set.

Array-backed kd-tree: median count split on the widest axis, points ordered
by (coordinate, index) so construction and ties are deterministic. Queries
run in a compiled kernel with an explicit stack; candidate order is
(distance, index), so equidistant neighbors resolve to smaller indices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import as_points

_STACK_CAP = 128


@dataclass
class KdTree:
    points: np.ndarray
    perm: np.ndarray
    node_axis: np.ndarray
    node_split: np.ndarray
    node_a: np.ndarray
    node_b: np.ndarray
    leaf_size: int
    depth: int

    @classmethod
    def build(cls, points, leaf_size: int = 16) -> "KdTree":
        pts = as_points(points)
        if len(pts) == 0:
            raise ValueError("cannot build a tree over zero points")
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        axis_l: list[int] = []
        split_l: list[float] = []
        a_l: list[int] = []
        b_l: list[int] = []
        perm_chunks: list[np.ndarray] = []
        offset = 0
        max_depth = 0

        def rec(indices: np.ndarray, depth: int) -> int:
            nonlocal offset, max_depth
            max_depth = max(max_depth, depth)
            node = len(axis_l)
            axis_l.append(-1)
            split_l.append(0.0)
            a_l.append(0)
            b_l.append(0)
            if len(indices) <= leaf_size:
                a_l[node] = offset
                offset += len(indices)
                b_l[node] = offset
                perm_chunks.append(indices)
                return node
            sub = pts[indices]
            extent = sub.max(axis=0) - sub.min(axis=0)
            ax = int(np.argmax(extent))
            order = np.lexsort((indices, sub[:, ax]))
            sorted_idx = indices[order]
            mid = len(indices) // 2
            axis_l[node] = ax
            split_l[node] = pts[sorted_idx[mid], ax]
            a_l[node] = rec(sorted_idx[:mid], depth + 1)
            b_l[node] = rec(sorted_idx[mid:], depth + 1)
            return node

        rec(np.arange(len(pts), dtype=np.int64), 1)
        return cls(
            pts,
            np.concatenate(perm_chunks),
            np.asarray(axis_l, dtype=np.int8),
            np.asarray(split_l, dtype=np.float64),
            np.asarray(a_l, dtype=np.int32),
            np.asarray(b_l, dtype=np.int32),
            leaf_size,
            max_depth,
        )

    @property
    def n(self) -> int:
        return len(self.points)

    def inorder_indices(self) -> np.ndarray:
        """Point indices in left-to-right leaf order."""
        return self.perm.copy()

    def knn_batch(self, queries, k: int):
        """Indices and distances of the k nearest points per query row.

        Returns (idx, dist) of shape (nq, min(k, n)), each row ascending by
        (distance, index).
        """
        q = as_points(queries, "queries")
        if k < 1:
            raise ValueError("k must be >= 1")
        kk = min(k, self.n)
        out_idx = np.empty((len(q), kk), dtype=np.int64)
        out_d2 = np.empty((len(q), kk), dtype=np.float64)
        if len(q):
            _knn_kernel(
                self.points, self.perm, self.node_axis, self.node_split,
                self.node_a, self.node_b, q, kk, out_idx, out_d2,
            )
        return out_idx, np.sqrt(out_d2)

    def knn(self, query, k: int) -> list[tuple[int, float]]:
        """k nearest neighbors of one point as (index, distance) pairs."""
        idx, dist = self.knn_batch(np.asarray(query, dtype=np.float64).reshape(1, 3), k)
        return [(int(i), float(d)) for i, d in zip(idx[0], dist[0])]


@njit(cache=True)
def _knn_kernel(pts, perm, node_axis, node_split, node_a, node_b, queries, k, out_idx, out_d2):
    nq = queries.shape[0]
    stack_node = np.empty(_STACK_CAP, np.int32)
    stack_d2 = np.empty(_STACK_CAP, np.float64)
    for qi in range(nq):
        qx = queries[qi, 0]
        qy = queries[qi, 1]
        qz = queries[qi, 2]
        bd = out_d2[qi]
        bi = out_idx[qi]
        for j in range(k):
            bd[j] = np.inf
            bi[j] = -1
        count = 0
        top = 1
        stack_node[0] = 0
        stack_d2[0] = 0.0
        while top > 0:
            top -= 1
            node = stack_node[top]
            # equal bound is kept: an equidistant lower index may lie there
            if count == k and stack_d2[top] > bd[k - 1]:
                continue
            while node_axis[node] >= 0:
                ax = node_axis[node]
                if ax == 0:
                    delta = qx - node_split[node]
                elif ax == 1:
                    delta = qy - node_split[node]
                else:
                    delta = qz - node_split[node]
                if delta < 0.0:
                    near = node_a[node]
                    far = node_b[node]
                else:
                    near = node_b[node]
                    far = node_a[node]
                fd = delta * delta
                if count < k or fd <= bd[k - 1]:
                    stack_node[top] = far
                    stack_d2[top] = fd
                    top += 1
                node = near
            for t in range(node_a[node], node_b[node]):
                p = perm[t]
                dx = pts[p, 0] - qx
                dy = pts[p, 1] - qy
                dz = pts[p, 2] - qz
                d2 = dx * dx + dy * dy + dz * dz
                if count < k:
                    pos = count
                    count += 1
                else:
                    if d2 > bd[k - 1]:
                        continue
                    if d2 == bd[k - 1] and p > bi[k - 1]:
                        continue
                    pos = k - 1
                bd[pos] = d2
                bi[pos] = p
                while pos > 0 and (bd[pos] < bd[pos - 1] or (bd[pos] == bd[pos - 1] and bi[pos] < bi[pos - 1])):
                    bd[pos], bd[pos - 1] = bd[pos - 1], bd[pos]
                    bi[pos], bi[pos - 1] = bi[pos - 1], bi[pos]
                    pos -= 1
