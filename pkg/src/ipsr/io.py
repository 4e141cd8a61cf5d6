"""Point-cloud and mesh file readers and writers.

Readers accept XYZ, OBJ (vertex lines), and PLY in ascii or binary
little-endian form; extra properties and input normals are skipped, since
the reconstruction deliberately ignores given orientation. Writers emit
byte-deterministic PLY (binary little-endian, double coordinates, int32
face indices) and OBJ, through a temp-file rename so failed writes never
leave partial output.
"""

from __future__ import annotations

import os
import tempfile
import warnings
from pathlib import Path

import numpy as np

from .geometry import TriangleMesh, as_points
from .sampling import SampleSet

MAX_INT32 = 2**31 - 1

_PLY_SCALARS = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class ParseError(ValueError):
    """Malformed input file; carries the location that failed to parse."""

    def __init__(self, path, detail: str, line: int | None = None, offset: int | None = None):
        loc = ""
        if line is not None:
            loc = f", line {line}"
        elif offset is not None:
            loc = f", byte {offset}"
        super().__init__(f"{path}{loc}: {detail}")
        self.path = str(path)
        self.detail = detail
        self.line = line
        self.offset = offset


def read_points(path) -> np.ndarray:
    """Read point positions from an XYZ, OBJ, or PLY file."""
    p = Path(path)
    ext = p.suffix.lower()
    if ext == ".xyz":
        return _read_xyz(p)
    if ext == ".obj":
        return _read_obj(p)
    if ext == ".ply":
        return _read_ply(p)
    raise ValueError(f"unsupported point file extension {ext or '(none)'!r}; "
                     "expected .xyz, .obj, or .ply")


def _read_xyz(path: Path) -> np.ndarray:
    rows = []
    lines = []
    with open(path, encoding="utf-8") as f:
        for no, raw in enumerate(f, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            tok = text.split()
            if len(tok) < 3:
                raise ParseError(path, f"expected at least 3 coordinates, got {len(tok)}", line=no)
            try:
                rows.append((float(tok[0]), float(tok[1]), float(tok[2])))
            except ValueError:
                raise ParseError(path, f"non-numeric coordinate in {text!r}", line=no) from None
            lines.append(no)
    pts = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
    _check_finite(pts, path, lines)
    return pts


def _read_obj(path: Path) -> np.ndarray:
    rows = []
    lines = []
    with open(path, encoding="utf-8") as f:
        for no, raw in enumerate(f, start=1):
            tok = raw.split()
            if not tok or tok[0] != "v":
                continue
            if len(tok) < 4:
                raise ParseError(path, "vertex line with fewer than 3 coordinates", line=no)
            try:
                rows.append((float(tok[1]), float(tok[2]), float(tok[3])))
            except ValueError:
                raise ParseError(path, f"non-numeric coordinate in {raw.strip()!r}", line=no) from None
            lines.append(no)
    pts = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
    _check_finite(pts, path, lines)
    return pts


def _check_finite(pts: np.ndarray, path: Path, lines: list[int]) -> None:
    bad = ~np.isfinite(pts).all(axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise ParseError(path, "non-finite coordinate", line=lines[i])


def _parse_ply_header(data: bytes, path: Path):
    if not data.startswith(b"ply"):
        raise ParseError(path, "not a PLY file (missing 'ply' magic)", offset=0)
    end = data.find(b"end_header")
    if end < 0:
        raise ParseError(path, "missing end_header", offset=len(data))
    nl = data.find(b"\n", end)
    if nl < 0:
        raise ParseError(path, "end_header line is not terminated", offset=len(data))
    header = data[:nl].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements: list[list] = []
    for no, line in enumerate(header[1:], start=2):
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info", "end_header"):
            continue
        if tok[0] == "format":
            if len(tok) != 3:
                raise ParseError(path, "malformed format line", line=no)
            if tok[1] == "binary_big_endian":
                raise ParseError(path, "big-endian PLY is not supported", line=no)
            if tok[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(path, f"unknown PLY format {tok[1]!r}", line=no)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise ParseError(path, f"malformed element line {line.strip()!r}", line=no)
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements:
                raise ParseError(path, "property before any element", line=no)
            if tok[1] == "list":
                if len(tok) != 5 or tok[2] not in _PLY_SCALARS or tok[3] not in _PLY_SCALARS:
                    raise ParseError(path, f"malformed list property {line.strip()!r}", line=no)
                elements[-1][2].append(("list", tok[2], tok[3], tok[4]))
            else:
                if len(tok) != 3 or tok[1] not in _PLY_SCALARS:
                    raise ParseError(path, f"malformed property {line.strip()!r}", line=no)
                elements[-1][2].append(("scalar", tok[1], None, tok[2]))
        else:
            raise ParseError(path, f"unrecognized header keyword {tok[0]!r}", line=no)
    if fmt is None:
        raise ParseError(path, "header has no format line", line=1)
    return fmt, elements, nl + 1


def _read_ply(path: Path) -> np.ndarray:
    data = path.read_bytes()
    fmt, elements, body = _parse_ply_header(data, path)
    vertex = next((e for e in elements if e[0] == "vertex"), None)
    if vertex is None:
        raise ParseError(path, "no vertex element", offset=body)
    names = [p[3] for p in vertex[2]]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise ParseError(path, f"vertex element lacks property {axis!r}", offset=body)
    if {"nx", "ny", "nz"} <= set(names):
        warnings.warn(f"{path}: input normals are present and will be ignored", stacklevel=3)
    if fmt == "ascii":
        return _ply_vertices_ascii(data, body, elements, path)
    return _ply_vertices_binary(data, body, elements, path)


def _ply_vertices_ascii(data: bytes, body: int, elements, path: Path,
                        columns=("x", "y", "z")) -> np.ndarray:
    n_header_lines = data[:body].count(b"\n")
    tokens: list[str] = []
    token_line: list[int] = []
    for off, raw in enumerate(data[body:].decode("ascii", errors="replace").splitlines()):
        for t in raw.split():
            tokens.append(t)
            token_line.append(n_header_lines + off + 1)
    pos = 0

    def take(count: int) -> int:
        nonlocal pos
        if pos + count > len(tokens):
            raise ParseError(path, "unexpected end of file", offset=len(data))
        pos += count
        return pos - count

    for name, count, props in elements:
        if name != "vertex":
            for _ in range(count):
                for kind, _ct, _it, _pn in props:
                    if kind == "list":
                        at = take(1)
                        try:
                            k = int(tokens[at])
                        except ValueError:
                            raise ParseError(path, f"bad list count {tokens[at]!r}",
                                             line=token_line[at]) from None
                        take(k)
                    else:
                        take(1)
            continue
        out = np.empty((count, len(columns)))
        col = {name: j for j, name in enumerate(columns)}
        for i in range(count):
            for kind, _ct, _it, pn in props:
                if kind == "list":
                    at = take(1)
                    take(int(tokens[at]))
                    continue
                at = take(1)
                if pn in col:
                    try:
                        v = float(tokens[at])
                    except ValueError:
                        raise ParseError(path, f"non-numeric coordinate {tokens[at]!r}",
                                         line=token_line[at]) from None
                    if not np.isfinite(v):
                        raise ParseError(path, "non-finite coordinate", line=token_line[at])
                    out[i, col[pn]] = v
        return out
    raise ParseError(path, "no vertex element", offset=body)


def _ply_vertices_binary(data: bytes, body: int, elements, path: Path,
                         columns=("x", "y", "z")) -> np.ndarray:
    pos = body
    for name, count, props in elements:
        has_list = any(p[0] == "list" for p in props)
        if name == "vertex":
            if has_list:
                raise ParseError(path, "list property on vertex element", offset=pos)
            dt = np.dtype([(p[3], "<" + _PLY_SCALARS[p[1]]) for p in props])
            if pos + count * dt.itemsize > len(data):
                raise ParseError(path, "unexpected end of file", offset=len(data))
            rec = np.frombuffer(data, dtype=dt, count=count, offset=pos)
            out = np.empty((count, len(columns)))
            for j, axis in enumerate(columns):
                out[:, j] = rec[axis].astype(np.float64)
            bad = ~np.isfinite(out).all(axis=1)
            if bad.any():
                row = int(np.argmax(bad))
                raise ParseError(path, "non-finite coordinate", offset=pos + row * dt.itemsize)
            return out
        if not has_list:
            pos += count * sum(np.dtype(_PLY_SCALARS[p[1]]).itemsize for p in props)
            continue
        for _ in range(count):
            for kind, ct, it, _pn in props:
                csize = np.dtype(_PLY_SCALARS[ct]).itemsize
                if kind == "scalar":
                    pos += csize
                    continue
                if pos + csize > len(data):
                    raise ParseError(path, "unexpected end of file", offset=len(data))
                k = int(np.frombuffer(data, dtype="<" + _PLY_SCALARS[ct], count=1, offset=pos)[0])
                pos += csize + k * np.dtype(_PLY_SCALARS[it]).itemsize
        if pos > len(data):
            raise ParseError(path, "unexpected end of file", offset=len(data))
    raise ParseError(path, "no vertex element", offset=body)


def read_mesh(path) -> TriangleMesh:
    """Read a triangle mesh from PLY or OBJ; polygons are fan-triangulated."""
    p = Path(path)
    ext = p.suffix.lower()
    if ext == ".obj":
        return _read_obj_mesh(p)
    if ext == ".ply":
        return _read_ply_mesh(p)
    raise ValueError(f"unsupported mesh extension {ext or '(none)'!r}; expected .ply or .obj")


def _fan(poly: list[int], faces: list[tuple[int, int, int]]) -> None:
    for j in range(1, len(poly) - 1):
        faces.append((poly[0], poly[j], poly[j + 1]))


def _read_obj_mesh(path: Path) -> TriangleMesh:
    verts = _read_obj(path)
    faces: list[tuple[int, int, int]] = []
    with open(path, encoding="utf-8") as f:
        for no, raw in enumerate(f, start=1):
            tok = raw.split()
            if not tok or tok[0] != "f":
                continue
            if len(tok) < 4:
                raise ParseError(path, "face with fewer than 3 vertices", line=no)
            poly = []
            for t in tok[1:]:
                try:
                    i = int(t.split("/", 1)[0])
                except ValueError:
                    raise ParseError(path, f"bad face index {t!r}", line=no) from None
                i = i - 1 if i > 0 else len(verts) + i
                if not 0 <= i < len(verts):
                    raise ParseError(path, f"face index {t} out of range", line=no)
                poly.append(i)
            _fan(poly, faces)
    return TriangleMesh.build(verts, np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def _read_ply_mesh(path: Path) -> TriangleMesh:
    verts = _read_ply(path)
    data = path.read_bytes()
    fmt, elements, body = _parse_ply_header(data, path)
    faces: list[tuple[int, int, int]] = []
    if fmt == "ascii":
        tokens = data[body:].decode("ascii", errors="replace").split()
        pos = 0
        for name, count, props in elements:
            for _ in range(count):
                for kind, _ct, _it, pn in props:
                    if pos >= len(tokens):
                        raise ParseError(path, "unexpected end of file", offset=len(data))
                    if kind == "scalar":
                        pos += 1
                        continue
                    k = int(tokens[pos])
                    poly = [int(t) for t in tokens[pos + 1:pos + 1 + k]]
                    pos += 1 + k
                    if name == "face" and pn in ("vertex_indices", "vertex_index"):
                        _fan(poly, faces)
    else:
        pos = body
        for name, count, props in elements:
            has_list = any(p[0] == "list" for p in props)
            if not has_list:
                pos += count * sum(np.dtype(_PLY_SCALARS[p[1]]).itemsize for p in props)
                continue
            for _ in range(count):
                for kind, ct, it, pn in props:
                    csize = np.dtype(_PLY_SCALARS[ct]).itemsize
                    if kind == "scalar":
                        pos += csize
                        continue
                    if pos + csize > len(data):
                        raise ParseError(path, "unexpected end of file", offset=len(data))
                    k = int(np.frombuffer(data, dtype="<" + _PLY_SCALARS[ct],
                                          count=1, offset=pos)[0])
                    isize = np.dtype(_PLY_SCALARS[it]).itemsize
                    if pos + csize + k * isize > len(data):
                        raise ParseError(path, "unexpected end of file", offset=len(data))
                    if name == "face" and pn in ("vertex_indices", "vertex_index"):
                        poly = np.frombuffer(data, dtype="<" + _PLY_SCALARS[it],
                                             count=k, offset=pos + csize)
                        _fan([int(x) for x in poly], faces)
                    pos += csize + k * isize
    arr = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if arr.size and (arr.min() < 0 or arr.max() >= len(verts)):
        raise ParseError(path, "face index out of range", offset=body)
    return TriangleMesh.build(verts, arr)


def _atomic_write(path: Path, payload: bytes) -> None:
    parent = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(dir=str(parent), prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _require_int32(n: int, what: str) -> None:
    if n > MAX_INT32:
        raise ValueError(f"{what} count {n} exceeds the int32 index range of the PLY face format")


def write_mesh(mesh: TriangleMesh, path) -> None:
    """Write a mesh as binary little-endian PLY or as OBJ, by extension."""
    p = Path(path)
    ext = p.suffix.lower()
    if ext == ".ply":
        _atomic_write(p, _mesh_ply_bytes(mesh))
    elif ext == ".obj":
        _atomic_write(p, _mesh_obj_bytes(mesh))
    else:
        raise ValueError(f"unsupported mesh extension {ext or '(none)'!r}; expected .ply or .obj")


def _mesh_ply_bytes(mesh: TriangleMesh) -> bytes:
    _require_int32(mesh.n_vertices, "vertex")
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {mesh.n_vertices}\n"
        "property double x\n"
        "property double y\n"
        "property double z\n"
        f"element face {mesh.n_faces}\n"
        "property list uchar int32 vertex_indices\n"
        "end_header\n"
    ).encode("ascii")
    vert = np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes()
    fdt = np.dtype([("n", "u1"), ("v", "<i4", (3,))])
    rec = np.empty(mesh.n_faces, dtype=fdt)
    rec["n"] = 3
    rec["v"] = mesh.faces
    return header + vert + rec.tobytes()


def _mesh_obj_bytes(mesh: TriangleMesh) -> bytes:
    _require_int32(mesh.n_vertices, "vertex")
    out = []
    for x, y, z in mesh.vertices:
        out.append(f"v {x:.17g} {y:.17g} {z:.17g}")
    for a, b, c in mesh.faces:
        out.append(f"f {a + 1} {b + 1} {c + 1}")
    return ("\n".join(out) + "\n" if out else "").encode("ascii")


def write_oriented_points(samples: SampleSet, path) -> None:
    """Write sample positions with their normals as binary little-endian PLY."""
    p = Path(path)
    if p.suffix.lower() != ".ply":
        raise ValueError("oriented points are written as .ply")
    pos = as_points(samples.positions)
    nrm = as_points(samples.normals, "normals")
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {len(pos)}\n"
        "property double x\n"
        "property double y\n"
        "property double z\n"
        "property double nx\n"
        "property double ny\n"
        "property double nz\n"
        "end_header\n"
    ).encode("ascii")
    body = np.ascontiguousarray(np.hstack([pos, nrm]), dtype="<f8").tobytes()
    _atomic_write(p, header + body)


def read_oriented_points(path) -> SampleSet:
    """Read a PLY of oriented points (x y z nx ny nz) back into a sample set."""
    p = Path(path)
    if p.suffix.lower() != ".ply":
        raise ValueError("oriented points are read from .ply")
    data = p.read_bytes()
    fmt, elements, body = _parse_ply_header(data, p)
    vertex = next((e for e in elements if e[0] == "vertex"), None)
    if vertex is None:
        raise ParseError(p, "no vertex element", offset=body)
    names = [q[3] for q in vertex[2]]
    needed = ("x", "y", "z", "nx", "ny", "nz")
    for nm in needed:
        if nm not in names:
            raise ParseError(p, f"vertex element lacks property {nm!r}", offset=body)
    if fmt == "ascii":
        cols = _ply_vertices_ascii(data, body, elements, p, columns=needed)
    else:
        cols = _ply_vertices_binary(data, body, elements, p, columns=needed)
    n = len(cols)
    return SampleSet(np.ascontiguousarray(cols[:, :3]), np.ascontiguousarray(cols[:, 3:]),
                     np.ones(n, dtype=np.int64), n)
