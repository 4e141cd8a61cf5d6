"""End-to-end reconstruction driver.

Normalizes the cloud into the unit cube, collapses it to grid samples,
initializes normals, then alternates screened Poisson solves with
area-weighted normal updates until the normals stop moving, and returns
the final extracted surface in world coordinates.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .geometry import TriangleMesh, as_points, connected_components, normalize_to_domain
from .isosurface import marching_cubes, mean_sample_value
from .orient import convergence_stat, link_faces, update_normals, visibility_init
from .poisson import GridField, solve_screened
from .sampling import MAX_DEPTH, MIN_DEPTH, SampleSet, build_samples, random_init
from .spatial import KdTree

EMPTY_STREAK_LIMIT = 3


class PipelineError(RuntimeError):
    """Raised when the alternation degenerates instead of converging."""


@dataclass
class IpsrConfig:
    """Reconstruction parameters.

    depth sets the grid resolution 2^depth per axis; alpha is the screening
    weight; delta the convergence threshold on the normal-change statistic;
    k the number of samples each face's normal contributes to. final_alpha,
    when set, replaces alpha for the one extra solve after convergence.
    initial_normals (one unit vector per input point) bypasses init.
    """

    depth: int = 7
    alpha: float = 10.0
    delta: float = 0.175
    k: int = 10
    max_iters: int = 30
    init: str = "random"
    seed: int = 0
    padding: float = 0.15
    cg_tol: float = 1e-7
    max_cg_iters: int | None = None
    final_alpha: float | None = None
    hpr_radius_exponent: float = 3.0
    deterministic: bool = False
    dump_dir: str | Path | None = None
    initial_normals: np.ndarray | None = field(default=None, repr=False)
    on_iteration: Callable | None = field(default=None, repr=False)

    def validate(self) -> None:
        if not MIN_DEPTH <= self.depth <= MAX_DEPTH:
            raise ValueError(f"depth must lie in [{MIN_DEPTH}, {MAX_DEPTH}], got {self.depth}")
        if not self.delta > 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not 1 <= self.max_iters <= 1000:
            raise ValueError(f"max_iters must lie in [1, 1000], got {self.max_iters}")
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if self.final_alpha is not None and self.final_alpha < 0.0:
            raise ValueError(f"final_alpha must be nonnegative, got {self.final_alpha}")
        if self.init not in ("random", "visibility"):
            raise ValueError(f"unknown init {self.init!r}; expected 'random' or 'visibility'")
        if not 0.0 < self.padding < 0.5:
            raise ValueError(f"padding must lie in (0, 0.5), got {self.padding}")


@dataclass
class IterationReport:
    iteration: int
    d: float
    faces: int
    components: int
    iso: float
    ms: float


class RunResult(NamedTuple):
    mesh: TriangleMesh
    samples: SampleSet
    reports: list[IterationReport]


def init_normals(samples: SampleSet, config: IpsrConfig) -> SampleSet:
    """Dispatch normal initialization by config.init."""
    if config.init == "random":
        return random_init(samples, config.seed)
    if config.init == "visibility":
        return visibility_init(samples, config.hpr_radius_exponent)
    raise ValueError(f"unknown init {config.init!r}; expected 'random' or 'visibility'")


def _world_mesh(mesh: TriangleMesh, transform) -> TriangleMesh:
    if mesh.n_faces == 0 and mesh.n_vertices == 0:
        return mesh
    return TriangleMesh.build(transform.to_world(mesh.vertices), mesh.faces)


class _Dumper:
    def __init__(self, dump_dir, transform):
        self.dir = Path(dump_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.transform = transform
        self.report_path = self.dir / "report.jsonl"
        self.report_path.write_text("")

    def emit(self, report: IterationReport, mesh: TriangleMesh, samples: SampleSet) -> None:
        from .io import write_mesh, write_oriented_points

        write_mesh(_world_mesh(mesh, self.transform), self.dir / f"iter_{report.iteration}.ply")
        world = replace(samples, positions=self.transform.to_world(samples.positions))
        write_oriented_points(world, self.dir / f"iter_{report.iteration}_points.ply")
        row = {"iter": report.iteration, "d": report.d, "faces": report.faces,
               "components": report.components, "iso": report.iso, "ms": report.ms}
        with open(self.report_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(row) + "\n")


def run_ipsr(points, config: IpsrConfig | None = None) -> RunResult:
    """Reconstruct a watertight surface from unoriented points.

    Returns the mesh in world coordinates, the samples with their final
    normals (world positions), and one report per iteration.
    """
    config = config if config is not None else IpsrConfig()
    config.validate()
    pts = as_points(points)
    if len(pts) < 4:
        raise ValueError(f"need at least 4 points, got {len(pts)}")

    unit_pts, transform = normalize_to_domain(pts, config.padding)
    if config.initial_normals is not None:
        vec = as_points(config.initial_normals, "initial_normals")
        if len(vec) != len(pts):
            raise ValueError("initial_normals must provide one vector per input point")
        samples = build_samples(unit_pts, config.depth, point_vectors=vec)
    else:
        samples = init_normals(build_samples(unit_pts, config.depth), config)

    tree = KdTree.build(samples.positions)
    resolution = 1 << config.depth
    dumper = _Dumper(config.dump_dir, transform) if config.dump_dir is not None else None

    reports: list[IterationReport] = []
    warm: GridField | None = None
    empty_streak = 0
    for iteration in range(1, config.max_iters + 1):
        t0 = time.perf_counter()
        field_ = solve_screened(samples, resolution, config.alpha,
                                tol=config.cg_tol, max_cg_iters=config.max_cg_iters, x0=warm)
        warm = field_
        iso = mean_sample_value(field_, samples)
        mesh = marching_cubes(field_, iso)
        if mesh.n_faces == 0:
            empty_streak += 1
            if empty_streak >= EMPTY_STREAK_LIMIT:
                raise PipelineError(
                    f"field collapsed: no iso-surface for {empty_streak} consecutive "
                    f"iterations (iteration {iteration}, iso {iso:.6g}, "
                    f"residual {field_.info.residual:.3g})")
            d = float("inf")
            n_comp = 0
        else:
            empty_streak = 0
            links = link_faces(mesh, tree, config.k)
            new_samples = update_normals(samples, mesh, links)
            d = convergence_stat(samples.normals, new_samples.normals).d
            samples = new_samples
            n_comp = len(connected_components(mesh))
        ms = (time.perf_counter() - t0) * 1000.0
        report = IterationReport(iteration, d, mesh.n_faces, n_comp, iso, ms)
        reports.append(report)
        if dumper is not None:
            dumper.emit(report, mesh, samples)
        if config.on_iteration is not None:
            config.on_iteration(report, samples, mesh)
        if iteration >= 2 and mesh.n_faces > 0 and d < config.delta:
            break

    final_alpha = config.alpha if config.final_alpha is None else config.final_alpha
    x0 = warm if final_alpha == config.alpha else None
    field_ = solve_screened(samples, resolution, final_alpha,
                            tol=config.cg_tol, max_cg_iters=config.max_cg_iters, x0=x0)
    iso = mean_sample_value(field_, samples)
    mesh = _world_mesh(marching_cubes(field_, iso), transform)
    out_samples = replace(samples, positions=transform.to_world(samples.positions))
    return RunResult(mesh, out_samples, reports)
