"""Shared fixtures: analytic point clouds, fields, and normal oracles."""

from __future__ import annotations

import numpy as np

from ipsr.poisson import GridField

TORUS_MAJOR = 0.28
TORUS_MINOR = 0.12
ELLIPSOID_AXES = (0.35, 0.25, 0.18)


def sphere_points(n: int, seed: int, radius: float = 1.0) -> np.ndarray:
    """Uniform points on a sphere via normalized Gaussian triples."""
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(n, 3))
    return radius * g / np.linalg.norm(g, axis=1, keepdims=True)


def sphere_inward(points: np.ndarray) -> np.ndarray:
    return -points / np.linalg.norm(points, axis=1, keepdims=True)


def torus_points(n: int, seed: int, major: float = TORUS_MAJOR,
                 minor: float = TORUS_MINOR) -> np.ndarray:
    """Area-uniform torus samples by rejection on the poloidal angle."""
    rng = np.random.default_rng(seed)
    out = np.empty((0, 3))
    while len(out) < n:
        m = 2 * (n - len(out)) + 64
        u = rng.uniform(0.0, 2.0 * np.pi, m)
        v = rng.uniform(0.0, 2.0 * np.pi, m)
        keep = rng.uniform(0.0, 1.0, m) < (major + minor * np.cos(v)) / (major + minor)
        u, v = u[keep], v[keep]
        ring = major + minor * np.cos(v)
        pts = np.stack([ring * np.cos(u), ring * np.sin(u), minor * np.sin(v)], axis=1)
        out = np.vstack([out, pts])
    return out[:n]


def torus_inward(points: np.ndarray, major: float = TORUS_MAJOR) -> np.ndarray:
    """Inward normals of a z-axis torus: toward the tube's center circle."""
    ring = points.copy()
    ring[:, 2] = 0.0
    ring *= major / np.linalg.norm(ring[:, :2], axis=1, keepdims=True)
    d = ring - points
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def ellipsoid_points(n: int, seed: int, axes=ELLIPSOID_AXES) -> np.ndarray:
    """Area-uniform ellipsoid samples by rejection on the area distortion."""
    a, b, c = axes
    rng = np.random.default_rng(seed)
    out = np.empty((0, 3))
    sig_max = max(b * c, a * c, a * b)
    while len(out) < n:
        m = 2 * (n - len(out)) + 64
        g = rng.normal(size=(m, 3))
        u = g / np.linalg.norm(g, axis=1, keepdims=True)
        sigma = np.sqrt((b * c * u[:, 0]) ** 2 + (a * c * u[:, 1]) ** 2 + (a * b * u[:, 2]) ** 2)
        keep = rng.uniform(0.0, 1.0, m) < sigma / sig_max
        out = np.vstack([out, u[keep] * [a, b, c]])
    return out[:n]


def ellipsoid_inward(points: np.ndarray, axes=ELLIPSOID_AXES) -> np.ndarray:
    a, b, c = axes
    g = np.stack([points[:, 0] / a**2, points[:, 1] / b**2, points[:, 2] / c**2], axis=1)
    return -g / np.linalg.norm(g, axis=1, keepdims=True)


def node_grid(resolution: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ax = np.linspace(0.0, 1.0, resolution + 1)
    return np.meshgrid(ax, ax, ax, indexing="ij")


def sphere_field(resolution: int, radius: float = 0.3, center=(0.5, 0.5, 0.5)) -> GridField:
    """Signed analytic field radius - distance; positive inside."""
    x, y, z = node_grid(resolution)
    d = np.sqrt((x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2)
    return GridField(radius - d)


def torus_field(resolution: int, major: float = TORUS_MAJOR, minor: float = TORUS_MINOR,
                center=(0.5, 0.5, 0.5)) -> GridField:
    """Signed analytic torus field; positive inside the tube."""
    x, y, z = node_grid(resolution)
    ring = np.sqrt((x - center[0]) ** 2 + (y - center[1]) ** 2) - major
    d = np.sqrt(ring**2 + (z - center[2]) ** 2)
    return GridField(minor - d)


def hull_vertices_oracle(points: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    """Brute-force hull vertices: a triple spans a hull facet when no point
    lies strictly on both sides of its plane. O(n^3) triples, O(n) test each."""
    import itertools

    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    triples = np.array(list(itertools.combinations(range(n), 3)), dtype=np.int64)
    on_hull = np.zeros(n, dtype=bool)
    for chunk in np.array_split(triples, max(1, len(triples) // 20000)):
        a, b, c = pts[chunk[:, 0]], pts[chunk[:, 1]], pts[chunk[:, 2]]
        nrm = np.cross(b - a, c - a)
        mag = np.linalg.norm(nrm, axis=1)
        good = mag > eps
        nrm[good] /= mag[good, None]
        d = pts @ nrm.T - (nrm * a).sum(axis=1)
        pos = (d > eps).any(axis=0)
        neg = (d < -eps).any(axis=0)
        facet = good & ~(pos & neg)
        on_hull[chunk[facet].ravel()] = True
    return np.flatnonzero(on_hull)


ACCEPTANCE_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)
