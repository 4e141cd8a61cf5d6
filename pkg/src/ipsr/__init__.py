"""Watertight surface reconstruction from unoriented point clouds.

Alternates a screened Poisson indicator solve with area-weighted normal
updates until the normals settle, then extracts the final iso-surface.
"""

from .geometry import BBox, DomainTransform, TriangleMesh, normalize_to_domain
from .io import (
    ParseError,
    read_mesh,
    read_oriented_points,
    read_points,
    write_mesh,
    write_oriented_points,
)
from .metrics import inward_fraction, symmetric_distance, topology_check, trim_mesh
from .pipeline import (
    IpsrConfig,
    IterationReport,
    PipelineError,
    RunResult,
    init_normals,
    run_ipsr,
)
from .poisson import SolveError
from .sampling import SampleSet, build_samples, random_init
from .toy2d import run_ipsr_2d

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "DomainTransform",
    "IpsrConfig",
    "IterationReport",
    "ParseError",
    "PipelineError",
    "RunResult",
    "SampleSet",
    "SolveError",
    "TriangleMesh",
    "build_samples",
    "init_normals",
    "inward_fraction",
    "normalize_to_domain",
    "random_init",
    "read_mesh",
    "read_oriented_points",
    "read_points",
    "run_ipsr",
    "run_ipsr_2d",
    "symmetric_distance",
    "topology_check",
    "trim_mesh",
    "write_mesh",
    "write_oriented_points",
    "__version__",
]
