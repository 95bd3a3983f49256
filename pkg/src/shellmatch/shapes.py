"""Procedural test shapes: spheres, grids, tubes and a simple biped.

These generate the synthetic pairs used by the test-suite, the demo
commands and the desk benchmark. Posed variants of a shape share its
connectivity, so the ground-truth correspondence is the identity.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.spatial.transform import Rotation

from .mesh import TriMesh


def icosphere(subdivisions=3, radius=1.0):
    """Subdivided icosahedron; 642 vertices at 3 subdivisions."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts) * radius, np.array(faces, dtype=np.int64)


def grid(nx=10, ny=10, size=1.0):
    """Flat square in the z=0 plane split into right triangles."""
    xs, ys = np.meshgrid(np.linspace(0, size, nx), np.linspace(0, size, ny), indexing="xy")
    verts = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(nx * ny)])
    faces = []
    for j, i in itertools.product(range(ny - 1), range(nx - 1)):
        a = j * nx + i
        faces += [(a, a + 1, a + nx + 1), (a, a + nx + 1, a + nx)]
    return verts, np.array(faces, dtype=np.int64)


def torus(n_major=24, n_minor=12, major=1.0, minor=0.35):
    u, v = np.meshgrid(np.linspace(0, 2 * np.pi, n_major, endpoint=False),
                       np.linspace(0, 2 * np.pi, n_minor, endpoint=False), indexing="ij")
    verts = np.column_stack([
        ((major + minor * np.cos(v)) * np.cos(u)).ravel(),
        ((major + minor * np.cos(v)) * np.sin(u)).ravel(),
        (minor * np.sin(v)).ravel(),
    ])
    faces = []
    for i, j in itertools.product(range(n_major), range(n_minor)):
        a = i * n_minor + j
        b = ((i + 1) % n_major) * n_minor + j
        c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
        d = i * n_minor + (j + 1) % n_minor
        faces += [(a, b, c), (a, c, d)]
    return verts, np.array(faces, dtype=np.int64)


def capsule(n_around=24, n_along=40, radius=0.2, length=2.0, n_cap=6):
    """Closed tube along x: a cylinder with hemispherical caps.

    Returns vertices, faces and the signed arc-length parameter of every
    vertex along the axis (useful for bending).
    """
    half = length / 2.0
    rings = []
    # cap rings from the -x pole towards the body
    for i in range(1, n_cap):
        a = np.pi / 2 * (1 - i / n_cap)
        rings.append((-half - radius * np.sin(a), radius * np.cos(a)))
    for x in np.linspace(-half, half, n_along):
        rings.append((x, radius))
    for i in range(n_cap - 1, 0, -1):
        a = np.pi / 2 * (1 - i / n_cap)
        rings.append((half + radius * np.sin(a), radius * np.cos(a)))
    theta = np.linspace(0, 2 * np.pi, n_around, endpoint=False)
    verts = [(-half - radius, 0.0, 0.0)]
    for x, r in rings:
        verts += [(x, r * np.cos(t), r * np.sin(t)) for t in theta]
    verts.append((half + radius, 0.0, 0.0))
    verts = np.array(verts)
    nr = len(rings)
    faces = []
    for j in range(n_around):
        faces.append((0, 1 + (j + 1) % n_around, 1 + j))
    for i in range(nr - 1):
        base, nxt = 1 + i * n_around, 1 + (i + 1) * n_around
        for j in range(n_around):
            j1 = (j + 1) % n_around
            faces += [(base + j, base + j1, nxt + j1), (base + j, nxt + j1, nxt + j)]
    last = len(verts) - 1
    base = 1 + (nr - 1) * n_around
    for j in range(n_around):
        faces.append((last, base + j, base + (j + 1) % n_around))
    return verts, np.array(faces, dtype=np.int64)


def bend_x(vertices, angle_deg, start=None):
    """Bend a shape lying along x around the z axis by ``angle_deg`` in total.

    The bend maps the axis segment ``[start, xmax]`` onto a circular arc of
    the same length, so distances along the axis are preserved.
    """
    v = np.asarray(vertices, dtype=float).copy()
    angle = np.deg2rad(angle_deg)
    if abs(angle) < 1e-12:
        return v
    xmin, xmax = v[:, 0].min(), v[:, 0].max()
    start = xmin if start is None else start
    length = xmax - start
    radius = length / angle
    s = np.clip(v[:, 0] - start, 0.0, None)
    phi = s / radius
    r = radius - v[:, 1]
    out = v.copy()
    bent = v[:, 0] > start
    out[bent, 0] = start + r[bent] * np.sin(phi[bent])
    out[bent, 1] = radius - r[bent] * np.cos(phi[bent])
    return out


def tube_pair(angle_deg=60.0, n_around=20, n_along=36):
    """Straight capsule and its bent copy, sharing connectivity."""
    v, f = capsule(n_around=n_around, n_along=n_along)
    return (TriMesh.from_arrays(v, f, name="tube"),
            TriMesh.from_arrays(bend_x(v, angle_deg), f, name=f"tube_bent{angle_deg:g}"))


# ---------------------------------------------------------------- biped

def _seg_dist(p, a, b):
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


# (name, start, end, radius); +z is the front, +y is up, +x is the left side
_BIPED_PARTS = [
    ("torso", (0.0, 0.95, 0.0), (0.0, 1.40, 0.0), 0.19),
    ("head", (0.0, 1.66, 0.0), (0.0, 1.70, 0.0), 0.12),
    ("nose", (0.0, 1.66, 0.10), (0.0, 1.64, 0.16), 0.035),
    ("larm", (0.20, 1.42, 0.0), (0.78, 1.40, 0.0), 0.065),
    ("rarm", (-0.20, 1.42, 0.0), (-0.78, 1.40, 0.0), 0.065),
    ("lleg", (0.10, 0.95, 0.0), (0.14, 0.12, 0.0), 0.085),
    ("rleg", (-0.10, 0.95, 0.0), (-0.14, 0.12, 0.0), 0.085),
    ("lfoot", (0.14, 0.08, -0.02), (0.15, 0.06, 0.20), 0.06),
    ("rfoot", (-0.14, 0.08, -0.02), (-0.15, 0.06, 0.20), 0.06),
]

# rigid bone for posing: part name -> (joint, parent chain)
_JOINTS = {
    "larm": (0.20, 1.42, 0.0), "rarm": (-0.20, 1.42, 0.0),
    "lleg": (0.10, 0.95, 0.0), "rleg": (-0.10, 0.95, 0.0),
    "lfoot": (0.10, 0.95, 0.0), "rfoot": (-0.10, 0.95, 0.0),
}


def _biped_sdf(points, smooth=0.05):
    d = None
    for _, a, b, r in _BIPED_PARTS:
        di = _seg_dist(points, np.array(a), np.array(b)) - r
        if d is None:
            d = di
        else:
            # polynomial smooth minimum
            h = np.clip(0.5 + 0.5 * (di - d) / smooth, 0.0, 1.0)
            d = di * (1 - h) + d * h - smooth * h * (1 - h)
    return d


def biped(spacing=0.035, target_vertices=None):
    """Marching-cubes humanoid, left-right symmetric, with a front (nose, feet).

    ``spacing`` sets the grid resolution; ``target_vertices`` optionally
    decimates the result.
    """
    from skimage.measure import marching_cubes

    half_x = 0.95
    nx = int(np.ceil(2 * half_x / spacing)) | 1
    xs = np.linspace(-half_x, half_x, nx)
    step = xs[1] - xs[0]
    ys = np.arange(-0.05, 1.90, step)
    zs = np.arange(-0.25, 0.35, step)
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    vol = _biped_sdf(pts).reshape(gx.shape)
    verts, faces, _, _ = marching_cubes(vol, level=0.0, spacing=(step, step, step))
    verts += np.array([xs[0], ys[0], zs[0]])
    faces = faces.astype(np.int64)
    if _signed_volume(verts, faces) < 0:
        faces = faces[:, ::-1]
    verts, faces = _weld(verts, faces)
    if target_vertices is not None:
        from .decimate import decimate

        m = TriMesh.from_arrays(verts, faces, normalize=False)
        dec = decimate(m, target_vertices, normalize=False)
        verts, faces = np.asarray(dec.mesh.vertices), np.asarray(dec.mesh.triangles)
    return verts, faces


def _weld(verts, faces, tol=1e-9):
    key = np.round(verts / tol).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    faces = inverse.ravel()[faces]
    keep = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    return verts[first], faces[keep]


def _signed_volume(verts, faces):
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def _part_weights(verts, sharpness=60.0):
    names = [p[0] for p in _BIPED_PARTS]
    d = np.column_stack([
        _seg_dist(verts, np.array(a), np.array(b)) - r for _, a, b, r in _BIPED_PARTS
    ])
    w = np.exp(-sharpness * (d - d.min(axis=1, keepdims=True)))
    return names, w / w.sum(axis=1, keepdims=True)


def pose_biped(verts, pose):
    """Skin-deform a biped mesh.

    ``pose`` maps part names (``larm``, ``rarm``, ``lleg``, ``rleg``) to
    rotation vectors in degrees about the part's joint. Feet follow their
    leg. A ``waist`` entry rotates everything above the hips about the
    vertical axis through the pelvis.
    """
    verts = np.asarray(verts, dtype=float)
    names, w = _part_weights(verts)
    transforms = {}
    for name in names:
        limb = {"lfoot": "lleg", "rfoot": "rleg"}.get(name, name)
        if limb in pose and limb in _JOINTS:
            rot = Rotation.from_rotvec(np.deg2rad(pose[limb])).as_matrix()
            j = np.array(_JOINTS[limb])
            transforms[name] = (rot, j - rot @ j)
        else:
            transforms[name] = (np.eye(3), np.zeros(3))
    out = np.zeros_like(verts)
    for k, name in enumerate(names):
        rot, t = transforms[name]
        out += w[:, k:k + 1] * (verts @ rot.T + t)
    if "waist" in pose:
        rot = Rotation.from_rotvec(np.deg2rad(pose["waist"])).as_matrix()
        pivot = np.array([0.0, 0.95, 0.0])
        blend = np.clip((verts[:, 1] - 0.85) / 0.2, 0.0, 1.0)[:, None]
        moved = (out - pivot) @ rot.T + pivot
        out = (1 - blend) * out + blend * moved
    return out


OCTAHEDRAL_ROTATIONS = None


def octahedral_rotations():
    """The 24 orientation-preserving symmetries of the cube, identity first."""
    global OCTAHEDRAL_ROTATIONS
    if OCTAHEDRAL_ROTATIONS is None:
        mats = []
        for perm in itertools.permutations(range(3)):
            for signs in itertools.product((1, -1), repeat=3):
                m = np.zeros((3, 3))
                for i, (p, s) in enumerate(zip(perm, signs)):
                    m[i, p] = s
                if np.linalg.det(m) > 0:
                    mats.append(m)
        mats.sort(key=lambda m: (not np.allclose(m, np.eye(3)),))
        OCTAHEDRAL_ROTATIONS = np.array(mats)
    return OCTAHEDRAL_ROTATIONS.copy()
