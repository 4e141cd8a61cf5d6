"""Screened Poisson solve on a regular node grid.

The indicator-like field chi lives on the (R+1)^3 nodes of a 2^depth cell
grid over the unit cube with homogeneous Dirichlet boundary. The discrete
energy is

    sum_cells h^3 |grad chi - V|^2  +  (alpha / n) sum_samples (chi(s) - 1/2)^2

with forward differences for the gradient and trilinear interpolation for
chi(s). The normal equations give A = h * L7 + (alpha/n) P^T P, where L7 is
the integer 7-point Laplacian stencil on interior nodes, and the gradient
term's right-hand side reduces to minus h^3 times the central-difference
divergence of the splatted field at interior nodes. The system is SPD and is
solved matrix-free with conjugate gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.ndimage import convolve1d

from .sampling import SampleSet

_SMOOTH = np.array([0.25, 0.5, 0.25])


class SolveError(RuntimeError):
    """Raised when CG fails to reach the requested residual.

    The achieved relative residual is carried in `residual`.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    history: np.ndarray


@dataclass
class GridField:
    """Scalar field sampled at the nodes of a cubic grid."""

    values: np.ndarray
    info: SolveInfo | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or len(set(v.shape)) != 1 or v.shape[0] < 2:
            raise ValueError(f"grid values must be cubic (r+1)^3, got {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("grid values contain non-finite entries")
        self.values = v

    @property
    def resolution(self) -> int:
        return self.values.shape[0] - 1

    @property
    def h(self) -> float:
        return 1.0 / self.resolution


@dataclass
class GridVectorField:
    """Vector field sampled at grid nodes, shape (r+1, r+1, r+1, 3)."""

    values: np.ndarray

    @property
    def resolution(self) -> int:
        return self.values.shape[0] - 1

    @property
    def h(self) -> float:
        return 1.0 / self.resolution

    def component_sums(self) -> np.ndarray:
        return self.values.sum(axis=(0, 1, 2))


def _corner_weights(positions: np.ndarray, res: int):
    """Trilinear cell corners and weights for unit-domain points.

    Returns (idx, w): idx is (n, 8, 3) node indices, w is (n, 8) weights
    summing to 1 per point.
    """
    c = positions * res
    i0 = np.clip(np.floor(c).astype(np.int64), 0, res - 1)
    f = c - i0
    idx = np.empty((len(positions), 8, 3), dtype=np.int64)
    w = np.empty((len(positions), 8))
    corner = 0
    for dz in (0, 1):
        for dy in (0, 1):
            for dx in (0, 1):
                idx[:, corner, 0] = i0[:, 0] + dx
                idx[:, corner, 1] = i0[:, 1] + dy
                idx[:, corner, 2] = i0[:, 2] + dz
                wx = f[:, 0] if dx else 1.0 - f[:, 0]
                wy = f[:, 1] if dy else 1.0 - f[:, 1]
                wz = f[:, 2] if dz else 1.0 - f[:, 2]
                w[:, corner] = wx * wy * wz
                corner += 1
    return idx, w


def splat_normals(samples: SampleSet, resolution: int) -> GridVectorField:
    """Distribute sample normals onto grid nodes and smooth once.

    Each normal is split trilinearly over its cell's 8 corners, then a 1-2-1
    binomial pass runs along every axis. Samples with a zero (unset) normal
    are skipped. Total vector mass is preserved because samples sit well
    inside the domain.
    """
    nrm = samples.normals
    norms = np.linalg.norm(nrm, axis=1)
    used = norms > 0.5
    if used.any():
        dev = np.abs(norms[used] - 1.0).max()
        if dev > 1e-8:
            raise ValueError(f"sample normals must be unit or zero (max deviation {dev:.3e})")
    nodes = resolution + 1
    grid = np.zeros((nodes, nodes, nodes, 3))
    if used.any():
        idx, w = _corner_weights(samples.positions[used], resolution)
        lin = ((idx[:, :, 0] * nodes + idx[:, :, 1]) * nodes + idx[:, :, 2]).ravel()
        flat = grid.reshape(-1, 3)
        vec = nrm[used]
        for comp in range(3):
            contrib = (w * vec[:, comp:comp + 1]).ravel()
            flat[:, comp] += np.bincount(lin, weights=contrib, minlength=nodes ** 3)
    for axis in range(3):
        grid = convolve1d(grid, _SMOOTH, axis=axis, mode="constant", cval=0.0)
    return GridVectorField(grid)


def divergence(field: GridVectorField) -> np.ndarray:
    """Node-wise divergence: central differences inside, one-sided at edges."""
    v = field.values
    h = field.h
    return (
        np.gradient(v[..., 0], h, axis=0)
        + np.gradient(v[..., 1], h, axis=1)
        + np.gradient(v[..., 2], h, axis=2)
    )


def _interior_ids(idx: np.ndarray, res: int) -> np.ndarray:
    """Map (n, 8, 3) node indices to flat interior ids, -1 on the boundary."""
    n_in = res - 1
    inside = ((idx > 0) & (idx < res)).all(axis=2)
    shifted = idx - 1
    flat = (shifted[:, :, 0] * n_in + shifted[:, :, 1]) * n_in + shifted[:, :, 2]
    return np.where(inside, flat, -1)


def _run_cg(x3, b3, pidx, pw, scal, h, tol, max_iters):
    bnorm = float(np.linalg.norm(b3))
    if bnorm == 0.0:
        x3[:] = 0.0
        return SolveInfo(0, 0.0, np.zeros(1))
    iters, residual, hist = _cg_kernel(x3, b3, pidx, pw, scal, h, tol, max_iters)
    return SolveInfo(int(iters), float(residual), hist)


def _assemble(x3: np.ndarray, res: int, info: SolveInfo) -> GridField:
    full = np.zeros((res + 1, res + 1, res + 1))
    full[1:-1, 1:-1, 1:-1] = x3
    return GridField(full, info)


def solve_screened(
    samples: SampleSet,
    resolution: int,
    alpha: float,
    tol: float = 1e-7,
    max_cg_iters: int | None = None,
    x0: GridField | None = None,
) -> GridField:
    """Solve the screened system for the current sample normals.

    alpha >= 0 weights the value constraint chi(s) = 1/2 at every sample
    position; alpha = 0 reduces to the plain Poisson problem. x0 warm-starts
    CG from a previous field of the same resolution. Raises SolveError when
    the relative residual does not reach tol within max_cg_iters
    (default 10 * resolution) iterations.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if alpha < 0.0:
        raise ValueError("alpha must be >= 0")
    if max_cg_iters is None:
        max_cg_iters = 10 * resolution
    h = 1.0 / resolution
    vec = splat_normals(samples, resolution)
    div = divergence(vec)
    # The splat carries one unit of vector mass per sample, so the field it
    # induces jumps by about h across the surface. Reading the node masses as
    # a density calibrated by 1/h makes the jump unit-scale at every depth,
    # which is the scale the screening target 1/2 and alpha presume.
    b3 = np.ascontiguousarray(-(h ** 2) * div[1:-1, 1:-1, 1:-1])

    idx, w = _corner_weights(samples.positions, resolution)
    pidx = _interior_ids(idx, resolution)
    pw = np.ascontiguousarray(w)
    scal = alpha / samples.n
    if scal > 0.0:
        flat_b = b3.reshape(-1)
        valid = pidx >= 0
        target = scal * 0.5
        flat_b += np.bincount(
            pidx[valid].ravel(), weights=target * pw[valid].ravel(), minlength=flat_b.size
        )

    if x0 is not None:
        if x0.resolution != resolution:
            raise ValueError("warm-start field resolution mismatch")
        x3 = np.ascontiguousarray(x0.values[1:-1, 1:-1, 1:-1])
    else:
        x3 = np.zeros((resolution - 1,) * 3)
    info = _run_cg(x3, b3, pidx, pw, scal, h, tol, max_cg_iters)
    if info.residual > tol:
        raise SolveError(
            f"CG stalled at relative residual {info.residual:.3e} "
            f"(target {tol:.1e}, {info.iterations} iterations)",
            info.residual,
        )
    return _assemble(x3, resolution, info)


def solve_grid_rhs(rhs: np.ndarray, tol: float = 1e-7, max_cg_iters: int | None = None) -> GridField:
    """Test entry: solve the unscreened system for an explicit gradient-term RHS.

    rhs holds node values standing in for the splatted-field term (G^T V), so
    the system is h * L7 chi = h^3 * rhs on interior nodes. Used for
    manufactured-solution convergence studies.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.ndim != 3 or len(set(rhs.shape)) != 1:
        raise ValueError("rhs must be a cubic node array")
    res = rhs.shape[0] - 1
    if max_cg_iters is None:
        max_cg_iters = 10 * res
    h = 1.0 / res
    b3 = np.ascontiguousarray((h ** 3) * rhs[1:-1, 1:-1, 1:-1])
    pidx = np.zeros((1, 8), dtype=np.int64) - 1
    pw = np.zeros((1, 8))
    x3 = np.zeros((res - 1,) * 3)
    info = _run_cg(x3, b3, pidx, pw, 0.0, h, tol, max_cg_iters)
    if info.residual > tol:
        raise SolveError(
            f"CG stalled at relative residual {info.residual:.3e}", info.residual
        )
    return _assemble(x3, res, info)


def eval_trilinear(field: GridField, points) -> np.ndarray:
    """Trilinear interpolation of the field at unit-domain points."""
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != 3:
        raise ValueError("points must have shape (n, 3)")
    if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
        raise ValueError("points outside the unit domain")
    idx, w = _corner_weights(pts, field.resolution)
    vals = field.values[idx[:, :, 0], idx[:, :, 1], idx[:, :, 2]]
    out = (vals * w).sum(axis=1)
    return out[0] if single else out


@njit(cache=True)
def _apply_operator(x, y, pidx, pw, scal, h):
    n = x.shape[0]
    for i in range(n):
        for j in range(n):
            for k in range(n):
                v = 6.0 * x[i, j, k]
                if i > 0:
                    v -= x[i - 1, j, k]
                if i < n - 1:
                    v -= x[i + 1, j, k]
                if j > 0:
                    v -= x[i, j - 1, k]
                if j < n - 1:
                    v -= x[i, j + 1, k]
                if k > 0:
                    v -= x[i, j, k - 1]
                if k < n - 1:
                    v -= x[i, j, k + 1]
                y[i, j, k] = h * v
    if scal > 0.0:
        nf = n * n * n
        xf = x.reshape(nf)
        yf = y.reshape(nf)
        for s in range(pidx.shape[0]):
            u = 0.0
            for c in range(8):
                t = pidx[s, c]
                if t >= 0:
                    u += pw[s, c] * xf[t]
            u *= scal
            for c in range(8):
                t = pidx[s, c]
                if t >= 0:
                    yf[t] += u * pw[s, c]


@njit(cache=True)
def _cg_kernel(x, b, pidx, pw, scal, h, tol, max_iters):
    n = x.shape[0]
    nf = n * n * n
    r = np.empty_like(x)
    p = np.empty_like(x)
    ap = np.empty_like(x)
    _apply_operator(x, ap, pidx, pw, scal, h)
    xf = x.reshape(nf)
    bf = b.reshape(nf)
    rf = r.reshape(nf)
    pf = p.reshape(nf)
    apf = ap.reshape(nf)
    rs = 0.0
    bn = 0.0
    for i in range(nf):
        rv = bf[i] - apf[i]
        rf[i] = rv
        pf[i] = rv
        rs += rv * rv
        bn += bf[i] * bf[i]
    bnorm = np.sqrt(bn)
    hist = np.empty(max_iters + 1)
    hist[0] = np.sqrt(rs) / bnorm
    it = 0
    while it < max_iters and np.sqrt(rs) > tol * bnorm:
        _apply_operator(p, ap, pidx, pw, scal, h)
        pap = 0.0
        for i in range(nf):
            pap += pf[i] * apf[i]
        step = rs / pap
        rs_new = 0.0
        for i in range(nf):
            xf[i] += step * pf[i]
            rv = rf[i] - step * apf[i]
            rf[i] = rv
            rs_new += rv * rv
        beta = rs_new / rs
        for i in range(nf):
            pf[i] = rf[i] + beta * pf[i]
        rs = rs_new
        it += 1
        hist[it] = np.sqrt(rs) / bnorm
    return it, np.sqrt(rs) / bnorm, hist[: it + 1]
