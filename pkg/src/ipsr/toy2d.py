"""Two-dimensional replica of the reconstruction loop.

A planar curve version of the pipeline for fast experiments and property
tests: 5-point Laplacian solve on the unit square, marching squares with
the same chord rule as the 3D extractor, and segment-length-weighted
normal updates. The convergence statistic, sample container, and
accumulation helpers are shared with the 3D code; the solver and the
extractor are small standalone 2D implementations.
"""

from __future__ import annotations

import time
from dataclasses import replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.ndimage import convolve1d
from scipy.sparse import csr_matrix, eye, identity, kron
from scipy.sparse.linalg import spsolve

from .geometry import as_points, normalize_to_domain
from .orient import accumulate_unit_normals, convergence_stat
from .pipeline import EMPTY_STREAK_LIMIT, IpsrConfig, IterationReport, PipelineError, init_normals
from .sampling import MAX_DEPTH, MIN_DEPTH, SampleSet

_SMOOTH = np.array([0.25, 0.5, 0.25])


class Run2dResult(NamedTuple):
    loops: list[np.ndarray]
    samples: SampleSet
    reports: list[IterationReport]


def ellipse_points(n: int = 400, a: float = 0.3, b: float = 0.18, seed: int = 0) -> np.ndarray:
    """Boundary samples of an axis-aligned ellipse centered at the origin."""
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0.0, 2.0 * np.pi, n))
    return np.stack([a * np.cos(t), b * np.sin(t)], axis=1)


def ellipse_inward_normals(points: np.ndarray, a: float = 0.3, b: float = 0.18) -> np.ndarray:
    """Analytic inward normals for points on the ellipse boundary."""
    pts = as_points(points, dim=2)
    g = np.stack([pts[:, 0] / a**2, pts[:, 1] / b**2], axis=1)
    return -g / np.linalg.norm(g, axis=1, keepdims=True)


def circle_points(n: int = 400, r: float = 0.3, seed: int = 0) -> np.ndarray:
    return ellipse_points(n, r, r, seed)


def circle_inward_normals(points: np.ndarray, center=(0.0, 0.0)) -> np.ndarray:
    pts = as_points(points, dim=2) - np.asarray(center, dtype=np.float64)
    return -pts / np.linalg.norm(pts, axis=1, keepdims=True)


_TWO_CIRCLE_CENTERS = np.array([[-0.22, 0.0], [0.22, 0.0]])


def two_circle_points(n: int = 400, r: float = 0.11, seed: int = 0) -> np.ndarray:
    """Two disjoint circles side by side, n points split between them."""
    half = n // 2
    left = circle_points(half, r, seed) + _TWO_CIRCLE_CENTERS[0]
    right = circle_points(n - half, r, seed + 1) + _TWO_CIRCLE_CENTERS[1]
    return np.vstack([left, right])


def two_circle_inward_normals(points: np.ndarray) -> np.ndarray:
    """Inward normals toward whichever of the two circle centers is nearer."""
    pts = as_points(points, dim=2)
    d0 = np.linalg.norm(pts - _TWO_CIRCLE_CENTERS[0], axis=1)
    d1 = np.linalg.norm(pts - _TWO_CIRCLE_CENTERS[1], axis=1)
    centers = _TWO_CIRCLE_CENTERS[(d1 < d0).astype(int)]
    rel = pts - centers
    return -rel / np.linalg.norm(rel, axis=1, keepdims=True)


def build_samples_2d(points, depth: int) -> SampleSet:
    """Per-cell centroid collapse of a unit-square cloud, 2D analogue."""
    pts = as_points(points, dim=2)
    if len(pts) == 0:
        raise ValueError("empty point cloud")
    if not MIN_DEPTH <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must lie in [{MIN_DEPTH}, {MAX_DEPTH}], got {depth}")
    if pts.min() < 0.0 or pts.max() > 1.0:
        raise ValueError("points must lie in the unit domain")
    res = 1 << depth
    cell = np.clip((pts * res).astype(np.int64), 0, res - 1)
    key = cell[:, 0] * res + cell[:, 1]
    uniq, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
    acc = np.empty((len(uniq), 2))
    for axis in range(2):
        acc[:, axis] = np.bincount(inv, weights=pts[:, axis], minlength=len(uniq))
    positions = acc / counts[:, None]
    return SampleSet(positions, np.zeros_like(positions), counts.astype(np.int64), len(pts))


def _corner_weights_2d(positions: np.ndarray, res: int):
    scaled = positions * res
    base = np.minimum(scaled.astype(np.int64), res - 1)
    frac = scaled - base
    idx = np.empty((len(positions), 4, 2), dtype=np.int64)
    w = np.empty((len(positions), 4))
    c = 0
    for dy in (0, 1):
        for dx in (0, 1):
            idx[:, c, 0] = base[:, 0] + dx
            idx[:, c, 1] = base[:, 1] + dy
            wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
            wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
            w[:, c] = wx * wy
            c += 1
    return idx, w


def splat_normals_2d(samples: SampleSet, resolution: int) -> np.ndarray:
    """Bilinear splat of unit normals onto grid nodes, smoothed per axis.

    Returns node vector masses of shape (res+1, res+1, 2); total mass per
    component equals the sum of the splatted normals exactly.
    """
    n_nodes = resolution + 1
    idx, w = _corner_weights_2d(samples.positions, resolution)
    lin = (idx[:, :, 0] * n_nodes + idx[:, :, 1]).ravel()
    out = np.zeros((n_nodes, n_nodes, 2))
    for comp in range(2):
        mass = (samples.normals[:, comp][:, None] * w).ravel()
        out[:, :, comp] = np.bincount(lin, weights=mass,
                                      minlength=n_nodes * n_nodes).reshape(n_nodes, n_nodes)
    for axis in (0, 1):
        out = convolve1d(out, _SMOOTH, axis=axis, mode="constant")
    return out


def eval_bilinear(values: np.ndarray, points: np.ndarray) -> np.ndarray:
    res = values.shape[0] - 1
    idx, w = _corner_weights_2d(as_points(points, dim=2), res)
    return (values[idx[:, :, 0], idx[:, :, 1]] * w).sum(axis=1)


def solve_screened_2d(samples: SampleSet, resolution: int, alpha: float) -> np.ndarray:
    """Screened Poisson solve on the unit square with a direct sparse solver.

    Same structure as the 3D solve: zero Dirichlet boundary, divergence of
    the splatted normal field as the source, bilinear screening pulling the
    field toward 1/2 at the samples. The node masses are read as a density
    with the same 1/h calibration as the 3D path, so the indicator jump is
    unit-scale at every depth. Returns node values (res+1, res+1).
    """
    res = resolution
    h = 1.0 / res
    mass = splat_normals_2d(samples, res)
    div = np.gradient(mass[:, :, 0], h, axis=0) + np.gradient(mass[:, :, 1], h, axis=1)
    b = np.ascontiguousarray(-h * div[1:-1, 1:-1]).ravel()

    m = res - 1
    k1 = (2.0 * identity(m) - eye(m, k=1) - eye(m, k=-1)).tocsr()
    lap = kron(k1, identity(m)) + kron(identity(m), k1)

    idx, w = _corner_weights_2d(samples.positions, res)
    interior = (idx[:, :, 0] >= 1) & (idx[:, :, 0] <= m) & (idx[:, :, 1] >= 1) & (idx[:, :, 1] <= m)
    rows = np.repeat(np.arange(samples.n), 4)[interior.ravel()]
    cols = ((idx[:, :, 0] - 1) * m + (idx[:, :, 1] - 1)).ravel()[interior.ravel()]
    vals = w.ravel()[interior.ravel()]
    p = csr_matrix((vals, (rows, cols)), shape=(samples.n, m * m))
    scal = alpha / samples.n if samples.n else 0.0
    a = (lap + scal * (p.T @ p)).tocsr()
    rhs = b + scal * 0.5 * np.asarray(p.sum(axis=0)).ravel()

    x = spsolve(a, rhs)
    field = np.zeros((res + 1, res + 1))
    field[1:-1, 1:-1] = x.reshape(m, m)
    return field


def marching_squares(values: np.ndarray, iso: float):
    """Extract the iso-curve as welded directed segments.

    Cell boundary corners are walked counterclockwise; each exit crossing
    (inside to outside) connects back to the cyclically preceding entry
    crossing, which separates inside corners on the ambiguous diagonal case
    and directs every segment with the inside region on its left.

    Returns (vertices (m, 2) in node units of h, segments (s, 2) vertex ids).
    """
    res = values.shape[0] - 1
    h = 1.0 / res
    inside = values > iso
    verts: list[tuple[float, float]] = []
    vid: dict[tuple[int, int, int], int] = {}

    def crossing(axis: int, ix: int, iy: int) -> int:
        key = (axis, ix, iy)
        got = vid.get(key)
        if got is not None:
            return got
        if axis == 0:
            va, vb = values[ix, iy], values[ix + 1, iy]
            t = (iso - va) / (vb - va)
            pos = ((ix + t) * h, iy * h)
        else:
            va, vb = values[ix, iy], values[ix, iy + 1]
            t = (iso - va) / (vb - va)
            pos = (ix * h, (iy + t) * h)
        vid[key] = len(verts)
        verts.append(pos)
        return vid[key]

    segments: list[tuple[int, int]] = []
    for ix in range(res):
        for iy in range(res):
            corners = ((ix, iy), (ix + 1, iy), (ix + 1, iy + 1), (ix, iy + 1))
            edges = ((0, ix, iy), (1, ix + 1, iy), (0, ix, iy + 1), (1, ix, iy))
            flags = [inside[c] for c in corners]
            if all(flags) or not any(flags):
                continue
            order = []
            for e in range(4):
                a, b = flags[e], flags[(e + 1) % 4]
                if a != b:
                    order.append((e, a))
            for pos_e, (e, was_in) in enumerate(order):
                if not was_in:
                    continue
                prev_e = order[(pos_e - 1) % len(order)]
                segments.append((crossing(*edges[e]), crossing(*edges[prev_e[0]])))
    return np.asarray(verts).reshape(-1, 2), np.asarray(segments, dtype=np.int64).reshape(-1, 2)


def extract_loops(vertices: np.ndarray, segments: np.ndarray) -> list[np.ndarray]:
    """Stitch directed segments into closed loops of vertex indices.

    Every vertex must have exactly one outgoing and one incoming segment;
    loops are reported starting from their smallest vertex id, smallest
    first.
    """
    if len(segments) == 0:
        return []
    nxt = np.full(len(vertices), -1, dtype=np.int64)
    indeg = np.zeros(len(vertices), dtype=np.int64)
    for a, b in segments:
        if nxt[a] != -1:
            raise ValueError(f"vertex {a} has two outgoing segments")
        nxt[a] = b
        indeg[b] += 1
    if (indeg > 1).any() or ((nxt == -1) != (indeg == 0)).any():
        raise ValueError("segment set is not a disjoint union of closed loops")
    seen = np.zeros(len(vertices), dtype=bool)
    loops = []
    for start in range(len(vertices)):
        if seen[start] or nxt[start] == -1:
            continue
        loop = [start]
        seen[start] = True
        cur = nxt[start]
        while cur != start:
            loop.append(cur)
            seen[cur] = True
            cur = nxt[cur]
        loops.append(np.asarray(loop, dtype=np.int64))
    return loops


def _segment_update(samples: SampleSet, vertices: np.ndarray, segments: np.ndarray,
                    k: int) -> SampleSet:
    """Length-weighted inward-normal vote from segments to k nearest samples."""
    a = vertices[segments[:, 0]]
    b = vertices[segments[:, 1]]
    mid = 0.5 * (a + b)
    d = b - a
    lengths = np.linalg.norm(d, axis=1)
    # inside lies on the left of the directed segment, so the left normal
    # points toward increasing field values
    inward = np.stack([-d[:, 1], d[:, 0]], axis=1)
    inward /= np.maximum(np.linalg.norm(inward, axis=1, keepdims=True), 1e-300)
    kk = min(k, samples.n)
    d2 = ((mid[:, None, :] - samples.positions[None, :, :]) ** 2).sum(axis=2)
    near = np.argpartition(d2, kk - 1, axis=1)[:, :kk]
    row_d2 = np.take_along_axis(d2, near, axis=1)
    ordv = np.lexsort((near, row_d2), axis=1)
    near = np.take_along_axis(near, ordv, axis=1)
    weighted = (lengths[:, None] * inward)[:, None, :].repeat(kk, axis=1).reshape(-1, 2)
    new = accumulate_unit_normals(samples.n, near.ravel(), weighted, samples.normals)
    return samples.with_normals(new)


def _svg_snapshot(path: Path, vertices: np.ndarray, loops: list[np.ndarray],
                  samples: SampleSet) -> None:
    parts = ['<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 1 1" width="512" height="512">',
             '<g transform="translate(0,1) scale(1,-1)">']
    for loop in loops:
        pts = " ".join(f"{vertices[i, 0]:.5f},{vertices[i, 1]:.5f}" for i in loop)
        parts.append(f'<polygon points="{pts}" fill="none" stroke="black" stroke-width="0.003"/>')
    glyph = 0.02
    for pos, nrm in zip(samples.positions, samples.normals):
        tip = pos + glyph * nrm
        parts.append(f'<line x1="{pos[0]:.5f}" y1="{pos[1]:.5f}" '
                     f'x2="{tip[0]:.5f}" y2="{tip[1]:.5f}" '
                     'stroke="red" stroke-width="0.002"/>')
    parts.append("</g></svg>")
    path.write_text("\n".join(parts))


def run_ipsr_2d(points, config: IpsrConfig | None = None) -> Run2dResult:
    """2D reconstruction loop; mirrors the 3D driver with planar analogues.

    Returns closed loops as world-coordinate polylines (implicitly closed,
    first vertex not repeated), the samples with final normals, and the
    per-iteration reports. The faces field of a report counts segments and
    the components field counts loops.
    """
    config = config if config is not None else IpsrConfig(depth=6)
    config.validate()
    pts = as_points(points, dim=2)
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")

    unit_pts, transform = normalize_to_domain(pts, config.padding, dim=2)
    samples = build_samples_2d(unit_pts, config.depth)
    if config.initial_normals is not None:
        vec = as_points(config.initial_normals, "initial_normals", dim=2)
        if len(vec) != len(pts):
            raise ValueError("initial_normals must provide one vector per input point")
        res = 1 << config.depth
        cell = np.clip((unit_pts * res).astype(np.int64), 0, res - 1)
        key = cell[:, 0] * res + cell[:, 1]
        _, inv = np.unique(key, return_inverse=True)
        acc = np.zeros((samples.n, 2))
        for axis in range(2):
            acc[:, axis] = np.bincount(inv, weights=vec[:, axis], minlength=samples.n)
        norms = np.linalg.norm(acc, axis=1, keepdims=True)
        samples = samples.with_normals(acc / np.maximum(norms, 1e-300))
    else:
        if config.init != "random":
            raise ValueError("the 2D loop supports random init only")
        samples = init_normals(samples, config)

    resolution = 1 << config.depth
    dump_dir = Path(config.dump_dir) if config.dump_dir is not None else None
    if dump_dir is not None:
        dump_dir.mkdir(parents=True, exist_ok=True)

    reports: list[IterationReport] = []
    loops: list[np.ndarray] = []
    vertices = np.zeros((0, 2))
    empty_streak = 0
    for iteration in range(1, config.max_iters + 1):
        t0 = time.perf_counter()
        field = solve_screened_2d(samples, resolution, config.alpha)
        iso = float(eval_bilinear(field, samples.positions).mean())
        vertices, segments = marching_squares(field, iso)
        if len(segments) == 0:
            empty_streak += 1
            if empty_streak >= EMPTY_STREAK_LIMIT:
                raise PipelineError(
                    f"field collapsed: no iso-curve for {empty_streak} consecutive "
                    f"iterations (iteration {iteration}, iso {iso:.6g})")
            d = float("inf")
            loops = []
        else:
            empty_streak = 0
            loops = extract_loops(vertices, segments)
            new_samples = _segment_update(samples, vertices, segments, config.k)
            d = convergence_stat(samples.normals, new_samples.normals).d
            samples = new_samples
        ms = (time.perf_counter() - t0) * 1000.0
        report = IterationReport(iteration, d, len(segments), len(loops), iso, ms)
        reports.append(report)
        if dump_dir is not None:
            _svg_snapshot(dump_dir / f"iter_{iteration}.svg", vertices, loops, samples)
        if config.on_iteration is not None:
            config.on_iteration(report, samples, (vertices, loops))
        if iteration >= 2 and len(segments) > 0 and d < config.delta:
            break

    field = solve_screened_2d(samples, resolution, config.alpha
                              if config.final_alpha is None else config.final_alpha)
    iso = float(eval_bilinear(field, samples.positions).mean())
    vertices, segments = marching_squares(field, iso)
    loops = extract_loops(vertices, segments)
    world_loops = [transform.to_world(vertices[loop]) for loop in loops]
    out_samples = replace(samples, positions=transform.to_world(samples.positions))
    return Run2dResult(world_loops, out_samples, reports)
