"""Command-line frontend.

Subcommands: reconstruct (points to mesh), evaluate (symmetric distance
between two meshes), orient (points to oriented-point PLY), toy2d (the
planar demonstration loop). Exit codes: 0 success, 2 argument or config
errors, 1 runtime failures. Output files are written atomically, so a
failed run never leaves partial output.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .io import ParseError, read_mesh, read_points, write_mesh, write_oriented_points
from .metrics import inward_fraction, symmetric_distance, trim_mesh
from .pipeline import IpsrConfig, PipelineError, run_ipsr
from .poisson import SolveError


def _add_common(sp: argparse.ArgumentParser, depth_default: int = 7) -> None:
    sp.add_argument("--depth", type=int, default=depth_default,
                    help="grid depth; resolution is 2^depth per axis (default %(default)s)")
    sp.add_argument("--alpha", type=float, default=10.0,
                    help="screening weight (default %(default)s)")
    sp.add_argument("--delta", type=float, default=0.175,
                    help="convergence threshold on the normal-change statistic")
    sp.add_argument("--k", type=int, default=10,
                    help="samples each face contributes its normal to")
    sp.add_argument("--max-iters", type=int, default=30)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--deterministic", action="store_true",
                    help="force single-threaded kernels")


def _add_init(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--init", choices=("random", "visibility"), default="random",
                    help="normal initialization scheme")
    sp.add_argument("--final-alpha", type=float, default=None,
                    help="screening weight for the one solve after convergence")
    sp.add_argument("--dump-iters", metavar="DIR", default=None,
                    help="write per-iteration meshes, points, and report.jsonl here")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ipsr",
        description="Watertight surface reconstruction from unoriented point clouds.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reconstruct", help="reconstruct a mesh from a point cloud")
    r.add_argument("input", help="point file (.xyz, .obj, .ply)")
    r.add_argument("-o", "--output", required=True, help="mesh output (.ply or .obj)")
    _add_common(r)
    _add_init(r)
    r.add_argument("--trim-dist", type=float, default=None,
                   help="drop mesh vertices farther than this from every input point")
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("evaluate", help="symmetric sampled distance between two meshes")
    e.add_argument("recon", help="reconstructed mesh")
    e.add_argument("reference", help="reference mesh (sets the normalization scale)")
    e.add_argument("--samples", type=int, default=100_000,
                   help="sample points per direction (default %(default)s)")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("orient", help="estimate oriented normals, write a point PLY")
    o.add_argument("input", help="point file (.xyz, .obj, .ply)")
    o.add_argument("-o", "--output", required=True, help="oriented-point output (.ply)")
    _add_common(o)
    _add_init(o)
    o.set_defaults(func=cmd_orient)

    t = sub.add_parser("toy2d", help="run the planar demonstration loop")
    t.add_argument("--shape", required=True, choices=("ellipse", "circle", "two-circles"))
    t.add_argument("--svg", metavar="DIR", default=None,
                   help="write per-iteration SVG snapshots here")
    _add_common(t, depth_default=6)
    t.set_defaults(func=cmd_toy2d)
    return p


def _apply_threads(args: argparse.Namespace) -> None:
    want = None
    env = os.environ.get("IPSR_THREADS", "").strip()
    if env:
        try:
            want = max(1, int(env))
        except ValueError:
            print(f"warning: ignoring non-integer IPSR_THREADS={env!r}", file=sys.stderr)
    if getattr(args, "deterministic", False):
        want = 1
    if want is not None:
        import numba

        numba.set_num_threads(min(want, numba.config.NUMBA_NUM_THREADS))


def _config_from_args(args: argparse.Namespace, parser: argparse.ArgumentParser) -> IpsrConfig:
    cfg = IpsrConfig(
        depth=args.depth, alpha=args.alpha, delta=args.delta, k=args.k,
        max_iters=args.max_iters, init=getattr(args, "init", "random"),
        seed=args.seed, final_alpha=getattr(args, "final_alpha", None),
        deterministic=args.deterministic,
        dump_dir=getattr(args, "dump_iters", None),
    )
    try:
        cfg.validate()
    except ValueError as err:
        parser.error(str(err))
    return cfg


def _require_file(path: str, parser: argparse.ArgumentParser) -> Path:
    p = Path(path)
    if not p.is_file():
        parser.error(f"input file not found: {p}")
    return p


def _report_to_stderr(report, _samples, _extra) -> None:
    print(f"iter={report.iteration} d={report.d:.6g} "
          f"faces={report.faces} components={report.components}", file=sys.stderr)


def cmd_reconstruct(args, parser) -> int:
    src = _require_file(args.input, parser)
    out = Path(args.output)
    if out.suffix.lower() not in (".ply", ".obj"):
        parser.error(f"output must end in .ply or .obj, got {out.name!r}")
    if args.trim_dist is not None and args.trim_dist <= 0.0:
        parser.error("--trim-dist must be positive")
    cfg = _config_from_args(args, parser)
    cfg.on_iteration = _report_to_stderr
    points = read_points(src)
    mesh, _samples, _reports = run_ipsr(points, cfg)
    if args.trim_dist is not None:
        mesh = trim_mesh(mesh, points, args.trim_dist)
    write_mesh(mesh, out)
    return 0


def cmd_evaluate(args, parser) -> int:
    recon_path = _require_file(args.recon, parser)
    ref_path = _require_file(args.reference, parser)
    if args.samples < 1000:
        parser.error("--samples must be at least 1000")
    mean, mx = symmetric_distance(read_mesh(recon_path), read_mesh(ref_path),
                                  samples_per_direction=args.samples, seed=args.seed)
    print(f"mean={mean:.6g} max={mx:.6g}")
    return 0


def cmd_orient(args, parser) -> int:
    src = _require_file(args.input, parser)
    out = Path(args.output)
    if out.suffix.lower() != ".ply":
        parser.error(f"oriented-point output must end in .ply, got {out.name!r}")
    cfg = _config_from_args(args, parser)
    cfg.on_iteration = _report_to_stderr
    _mesh, samples, _reports = run_ipsr(read_points(src), cfg)
    write_oriented_points(samples, out)
    return 0


def cmd_toy2d(args, parser) -> int:
    from .geometry import normalize_to_domain
    from .toy2d import (
        circle_inward_normals,
        circle_points,
        ellipse_inward_normals,
        ellipse_points,
        run_ipsr_2d,
        two_circle_inward_normals,
        two_circle_points,
    )

    shapes = {
        "ellipse": (ellipse_points, ellipse_inward_normals),
        "circle": (circle_points, circle_inward_normals),
        "two-circles": (two_circle_points, two_circle_inward_normals),
    }
    make_points, truth = shapes[args.shape]
    points = make_points()
    cfg = _config_from_args(args, parser)
    cfg.dump_dir = args.svg
    _unit, transform = normalize_to_domain(points, cfg.padding, dim=2)

    def report(rep, samples, _extra) -> None:
        frac = inward_fraction(samples, truth(transform.to_world(samples.positions)))
        print(f"iter={rep.iteration} inward={frac:.4f}")

    cfg.on_iteration = report
    run_ipsr_2d(points, cfg)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_threads(args)
    try:
        return args.func(args, parser)
    except (PipelineError, SolveError, ParseError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
