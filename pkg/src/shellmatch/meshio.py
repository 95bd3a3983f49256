"""ASCII OFF / PLY readers and writers, plus correspondence and matrix files."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import EmptyMesh, InputError, NonTriangleFace, ParseError
from .mesh import PointMap, TriMesh

COORD_FMT = "%.9g"


def _tokens(path):
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                yield line


def read_off(path):
    """Return raw ``(vertices, triangles)`` arrays from an ASCII OFF file."""
    lines = _tokens(path)
    try:
        head = next(lines)
    except StopIteration:
        raise ParseError(f"{path}: empty file") from None
    if not head.startswith("OFF"):
        raise ParseError(f"{path}: missing OFF header")
    rest = head[3:].split()
    try:
        counts = rest if len(rest) >= 3 else next(lines).split()
        nv, nf = int(counts[0]), int(counts[1])
        verts = np.array([next(lines).split()[:3] for _ in range(nv)], dtype=float)
        faces = [next(lines).split() for _ in range(nf)]
    except (StopIteration, ValueError, IndexError) as exc:
        raise ParseError(f"{path}: truncated or malformed OFF body ({exc})") from None
    return verts.reshape(-1, 3), _faces_to_array(faces, path)


def _faces_to_array(faces, path):
    if not faces:
        raise EmptyMesh(f"{path}: no faces")
    out = np.empty((len(faces), 3), dtype=np.int64)
    for i, f in enumerate(faces):
        try:
            k = int(f[0])
            idx = [int(x) for x in f[1:1 + k]]
        except (ValueError, IndexError):
            raise ParseError(f"{path}: bad face record {i}") from None
        if k != 3 or len(idx) != 3:
            raise NonTriangleFace(f"{path}: face {i} has {k} vertices")
        out[i] = idx
    return out


def read_ply(path):
    """Return raw ``(vertices, triangles)`` arrays from an ASCII PLY file."""
    lines = _tokens(path)
    try:
        if next(lines) != "ply":
            raise ParseError(f"{path}: missing ply magic")
        elements = []
        for line in lines:
            parts = line.split()
            if parts[0] == "format":
                if parts[1] != "ascii":
                    raise ParseError(f"{path}: only ASCII PLY is supported")
            elif parts[0] == "element":
                elements.append([parts[1], int(parts[2]), []])
            elif parts[0] == "property":
                elements[-1][2].append(parts[-1])
            elif parts[0] == "end_header":
                break
        verts, faces = None, []
        for name, count, props in elements:
            rows = [next(lines).split() for _ in range(count)]
            if name == "vertex":
                cols = [props.index(c) for c in ("x", "y", "z")]
                verts = np.array([[r[c] for c in cols] for r in rows], dtype=float)
            elif name == "face":
                faces = rows
    except (StopIteration, ValueError, IndexError) as exc:
        raise ParseError(f"{path}: malformed PLY ({exc})") from None
    if verts is None:
        raise ParseError(f"{path}: no vertex element")
    return verts.reshape(-1, 3), _faces_to_array(faces, path)


def read_raw(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    suffix = path.suffix.lower()
    if suffix == ".off":
        return read_off(path)
    if suffix == ".ply":
        return read_ply(path)
    raise ParseError(f"{path}: unknown mesh format {suffix!r} (expected .off or .ply)")


def load_mesh(path, normalize=True, clamp_negative=False):
    """Read an OFF/PLY file into a centered, unit-area :class:`TriMesh`."""
    v, f = read_raw(path)
    return TriMesh.from_arrays(v, f, normalize=normalize, clamp_negative=clamp_negative,
                               name=Path(path).stem)


def write_off(path, vertices, triangles):
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"OFF\n{len(vertices)} {len(triangles)} 0\n")
        np.savetxt(fh, vertices, fmt=COORD_FMT)
        np.savetxt(fh, np.column_stack([np.full(len(triangles), 3), triangles]), fmt="%d")


def write_ply(path, vertices, triangles, colors=None):
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(vertices)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        if colors is not None:
            fh.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        fh.write(f"element face {len(triangles)}\n")
        fh.write("property list uchar int vertex_indices\nend_header\n")
        if colors is None:
            np.savetxt(fh, vertices, fmt=COORD_FMT)
        else:
            colors = np.asarray(colors, dtype=np.int64)
            for p, c in zip(vertices, colors):
                fh.write(" ".join(COORD_FMT % x for x in p) + " %d %d %d\n" % tuple(c))
        np.savetxt(fh, np.column_stack([np.full(len(triangles), 3), triangles]), fmt="%d")


def save_mesh(path, vertices, triangles, colors=None):
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        write_ply(path, vertices, triangles, colors)
    elif suffix == ".off":
        write_off(path, vertices, triangles)
    else:
        raise InputError(f"{path}: unknown mesh format {suffix!r}")


def write_correspondence(path, point_map, one_based=False):
    """One integer per line; line ``i`` is the match of domain vertex ``i``."""
    a = np.asarray(point_map.assignments if isinstance(point_map, PointMap) else point_map)
    np.savetxt(path, a + (1 if one_based else 0), fmt="%d")


def read_correspondence(path, one_based=False, direction="source_to_target", codomain_size=None):
    if not os.path.exists(path):
        raise InputError(f"no such file: {path}")
    try:
        a = np.loadtxt(path, dtype=np.int64, ndmin=1)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if one_based:
        a = a - 1
    return PointMap(a, direction, codomain_size)


def read_matrix(path):
    """Whitespace-separated ASCII matrix, one row per line."""
    if not os.path.exists(path):
        raise InputError(f"no such file: {path}")
    try:
        return np.loadtxt(path, dtype=float, ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
