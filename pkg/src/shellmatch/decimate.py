"""Shortest-edge-collapse mesh decimation."""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass

import numpy as np

from .mesh import TriMesh

logger = logging.getLogger(__name__)


class DecimationStall(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class Decimation:
    """Coarse mesh plus its relation to the input.

    ``index_map[i]`` is the input vertex that survived as coarse vertex ``i``;
    ``assignment[j]`` is the coarse vertex that input vertex ``j`` was merged
    into. ``mesh.scale``/``mesh.offset`` relate coarse coordinates back to
    the input frame.
    """

    mesh: TriMesh
    index_map: np.ndarray
    assignment: np.ndarray

    def to_input_frame(self, coords):
        return np.asarray(coords) / self.mesh.scale + self.mesh.offset


def _normal(p, a, b, c):
    return np.cross(p[b] - p[a], p[c] - p[a])


def decimate(mesh, target_vertices, normalize=True):
    """Collapse shortest edges to their midpoint until ``<= target_vertices`` remain.

    Collapses that violate the link condition or flip an adjacent face are
    skipped. When no legal collapse is left the best effort is returned and a
    :class:`DecimationStall` warning is logged.
    """
    if target_vertices < 4:
        raise ValueError("target_vertices must be at least 4")
    n = mesh.n_vertices
    if target_vertices >= n:
        return Decimation(mesh, np.arange(n), np.arange(n))

    pos = np.array(mesh.vertices, dtype=float)
    faces = np.array(mesh.triangles, dtype=np.int64)
    face_alive = np.ones(len(faces), dtype=bool)
    vfaces = [set() for _ in range(n)]
    for fi, f in enumerate(faces):
        for v in f:
            vfaces[v].add(fi)
    parent = np.arange(n)
    alive = n

    def neighbors(v):
        out = set()
        for fi in vfaces[v]:
            out.update(faces[fi])
        out.discard(v)
        return out

    heap = []
    for a, b in mesh.edges():
        heapq.heappush(heap, (float(np.linalg.norm(pos[a] - pos[b])), int(a), int(b)))

    while alive > target_vertices and heap:
        length, u, v = heapq.heappop(heap)
        if parent[u] != u or parent[v] != v:
            continue
        shared = vfaces[u] & vfaces[v]
        if not shared:
            continue
        cur = float(np.linalg.norm(pos[u] - pos[v]))
        if cur != length:
            heapq.heappush(heap, (cur, u, v))
            continue
        # link condition
        opposite = set()
        for fi in shared:
            opposite.update(faces[fi])
        opposite -= {u, v}
        if neighbors(u) & neighbors(v) != opposite:
            continue
        mid = 0.5 * (pos[u] + pos[v])
        ok = True
        changed = (vfaces[u] | vfaces[v]) - shared
        for fi in changed:
            a, b, c = faces[fi]
            before = _normal(pos, a, b, c)
            pa, pb, pc = (mid if x in (u, v) else pos[x] for x in (a, b, c))
            after = np.cross(pb - pa, pc - pa)
            if before @ after <= 1e-12 * (before @ before):
                ok = False
                break
        if not ok:
            continue
        for fi in shared:
            face_alive[fi] = False
            for x in faces[fi]:
                vfaces[x].discard(fi)
        for fi in list(vfaces[v]):
            f = faces[fi]
            f[f == v] = u
            vfaces[u].add(fi)
        vfaces[v] = set()
        pos[u] = mid
        parent[v] = u
        alive -= 1
        for w in neighbors(u):
            heapq.heappush(heap, (float(np.linalg.norm(pos[u] - pos[w])), u, int(w)))

    if alive > target_vertices:
        logger.warning("decimation stalled at %d vertices (target %d)", alive, target_vertices)

    # resolve merge chains
    root = parent.copy()
    while True:
        nxt = root[root]
        if np.array_equal(nxt, root):
            break
        root = nxt
    survivors = np.flatnonzero(parent == np.arange(n))
    remap = -np.ones(n, dtype=np.int64)
    remap[survivors] = np.arange(len(survivors))
    new_faces = remap[faces[face_alive]]
    coarse = TriMesh.from_arrays(pos[survivors], new_faces, normalize=normalize,
                                 name=mesh.name + "_dec")
    if coarse.n_vertices != len(survivors):
        raise RuntimeError("decimation left unreferenced vertices")
    return Decimation(coarse, survivors, remap[root])
