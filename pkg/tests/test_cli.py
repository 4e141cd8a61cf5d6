"""Command-line interface: exit codes, reports, and deterministic reruns."""

import re
import subprocess
import sys

import numpy as np
import pytest

from conftest import sphere_field, sphere_points
from ipsr.cli import main
from ipsr.io import read_mesh, read_points, write_mesh
from ipsr.isosurface import marching_cubes

ITER_LINE = re.compile(r"^iter=\d+ d=[0-9.einf+-]+ faces=\d+ components=\d+$")


@pytest.fixture()
def sphere_xyz(tmp_path):
    pts = sphere_points(800, 3)
    path = tmp_path / "sphere.xyz"
    np.savetxt(path, pts, fmt="%.8f")
    return path


def test_reconstruct_writes_mesh_and_reports(sphere_xyz, tmp_path, capsys):
    out = tmp_path / "mesh.ply"
    rc = main(["reconstruct", str(sphere_xyz), "-o", str(out), "--depth", "4"])
    captured = capsys.readouterr()
    assert rc == 0
    assert out.is_file()
    mesh = read_mesh(out)
    assert mesh.n_faces > 0
    lines = [l for l in captured.err.splitlines() if l.startswith("iter=")]
    assert len(lines) >= 2
    for line in lines:
        assert ITER_LINE.match(line), line


def test_reconstruct_obj_output(sphere_xyz, tmp_path):
    out = tmp_path / "mesh.obj"
    rc = main(["reconstruct", str(sphere_xyz), "-o", str(out), "--depth", "4"])
    assert rc == 0
    assert read_mesh(out).n_faces > 0


def test_reconstruct_deterministic_rerun(sphere_xyz, tmp_path, capsys):
    outs = []
    errs = []
    for name in ("a.ply", "b.ply"):
        out = tmp_path / name
        rc = main(["reconstruct", str(sphere_xyz), "-o", str(out),
                   "--depth", "4", "--seed", "42", "--deterministic"])
        assert rc == 0
        outs.append(out.read_bytes())
        errs.append(capsys.readouterr().err)
    assert outs[0] == outs[1]
    assert errs[0] == errs[1]


def test_reconstruct_trim(sphere_xyz, tmp_path):
    out = tmp_path / "trimmed.ply"
    rc = main(["reconstruct", str(sphere_xyz), "-o", str(out),
               "--depth", "4", "--trim-dist", "0.3"])
    assert rc == 0
    assert read_mesh(out).n_faces > 0


def test_argument_errors_exit_two(sphere_xyz, tmp_path):
    out = str(tmp_path / "x.ply")
    cases = [
        ["reconstruct", str(sphere_xyz), "-o", out, "--depth", "3"],
        ["reconstruct", str(tmp_path / "missing.xyz"), "-o", out],
        ["reconstruct", str(sphere_xyz), "-o", str(tmp_path / "x.stl")],
        ["reconstruct", str(sphere_xyz), "-o", out, "--init", "psychic"],
        ["reconstruct", str(sphere_xyz), "-o", out, "--trim-dist", "0"],
        ["evaluate", str(tmp_path / "no.ply"), str(tmp_path / "no.ply")],
        ["toy2d", "--shape", "dodecahedron"],
        ["orient", str(sphere_xyz), "-o", str(tmp_path / "x.xyz")],
    ]
    for argv in cases:
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2, argv


def test_depth_error_names_valid_range(sphere_xyz, tmp_path, capsys):
    with pytest.raises(SystemExit):
        main(["reconstruct", str(sphere_xyz), "-o", str(tmp_path / "x.ply"),
              "--depth", "12"])
    assert "[4, 10]" in capsys.readouterr().err


def test_malformed_content_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.xyz"
    bad.write_text("1 2 3\nnot numbers here\n")
    rc = main(["reconstruct", str(bad), "-o", str(tmp_path / "x.ply")])
    captured = capsys.readouterr()
    assert rc == 1
    assert "error:" in captured.err
    assert not (tmp_path / "x.ply").exists()


def test_too_few_points_exits_one(tmp_path, capsys):
    tiny = tmp_path / "tiny.xyz"
    tiny.write_text("0 0 0\n1 0 0\n")
    rc = main(["reconstruct", str(tiny), "-o", str(tmp_path / "x.ply")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_evaluate_self_distance_zero(tmp_path, capsys):
    mesh = marching_cubes(sphere_field(16), 0.0)
    p = tmp_path / "m.ply"
    write_mesh(mesh, p)
    rc = main(["evaluate", str(p), str(p), "--samples", "2000"])
    captured = capsys.readouterr()
    assert rc == 0
    m = re.match(r"^mean=(\S+) max=(\S+)$", captured.out.strip())
    assert m
    # Samples lie exactly on the evaluated mesh; distances are pure rounding
    # noise from the clamped barycentric arithmetic.
    assert float(m.group(1)) <= 1e-12
    assert float(m.group(2)) <= 1e-12


def test_evaluate_sample_floor(tmp_path, capsys):
    mesh = marching_cubes(sphere_field(16), 0.0)
    p = tmp_path / "m.ply"
    write_mesh(mesh, p)
    with pytest.raises(SystemExit) as exc:
        main(["evaluate", str(p), str(p), "--samples", "500"])
    assert exc.value.code == 2


def test_orient_writes_oriented_ply(sphere_xyz, tmp_path):
    out = tmp_path / "oriented.ply"
    rc = main(["orient", str(sphere_xyz), "-o", str(out), "--depth", "4"])
    assert rc == 0
    header = out.read_bytes().split(b"end_header")[0].decode()
    for prop in ("nx", "ny", "nz"):
        assert f"property double {prop}" in header
    with pytest.warns(UserWarning):
        pts = read_points(out)
    assert pts.shape[1] == 3


def test_toy2d_reports_inward_fraction(tmp_path, capsys):
    rc = main(["toy2d", "--shape", "ellipse", "--depth", "5", "--seed", "0"])
    captured = capsys.readouterr()
    assert rc == 0
    lines = captured.out.strip().splitlines()
    assert len(lines) >= 2
    for line in lines:
        assert re.match(r"^iter=\d+ inward=[01]\.\d{4}$", line), line
    final = float(lines[-1].split("inward=")[1])
    assert final >= 0.95


def test_toy2d_svg_snapshots(tmp_path):
    svg_dir = tmp_path / "snaps"
    rc = main(["toy2d", "--shape", "circle", "--depth", "5", "--svg", str(svg_dir)])
    assert rc == 0
    files = sorted(svg_dir.glob("iter_*.svg"))
    assert files
    assert files[0].read_text().startswith("<svg")


def test_module_entry_point_help():
    proc = subprocess.run(
        [sys.executable, "-m", "ipsr", "--help"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0
    assert "reconstruct" in proc.stdout
    assert "toy2d" in proc.stdout
