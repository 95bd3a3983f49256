"""Triangle mesh data model and discrete differential operators."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import DegenerateGeometry, EmptyMesh, IndexOutOfRange, NonTriangleFace

logger = logging.getLogger(__name__)

DEGENERATE_AREA_RATIO = 1e-12


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def triangle_areas(vertices, triangles):
    e1 = vertices[triangles[:, 1]] - vertices[triangles[:, 0]]
    e2 = vertices[triangles[:, 2]] - vertices[triangles[:, 0]]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def vertex_normals(vertices, triangles, fallback=None):
    """Area-weighted vertex normals, unit length.

    Vertices whose accumulated normal vanishes take the matching row of
    ``fallback`` (or +z when no fallback is given).
    """
    vertices = np.asarray(vertices, dtype=float)
    fn = np.cross(
        vertices[triangles[:, 1]] - vertices[triangles[:, 0]],
        vertices[triangles[:, 2]] - vertices[triangles[:, 0]],
    )
    vn = np.zeros_like(vertices)
    for c in range(3):
        np.add.at(vn, triangles[:, c], fn)
    norms = np.linalg.norm(vn, axis=1)
    bad = norms <= 1e-300
    norms[bad] = 1.0
    vn /= norms[:, None]
    if bad.any():
        if fallback is not None:
            vn[bad] = fallback[bad]
        else:
            vn[bad] = (0.0, 0.0, 1.0)
    return vn


def cotangent_weights(vertices, triangles):
    """Per-triangle half-cotangents of the angle opposite each edge.

    Column ``c`` holds 0.5*cot of the angle at corner ``c``; that corner is
    opposite the edge (c+1, c+2).
    """
    out = np.empty((len(triangles), 3))
    for c in range(3):
        i, j, k = triangles[:, c], triangles[:, (c + 1) % 3], triangles[:, (c + 2) % 3]
        u = vertices[j] - vertices[i]
        v = vertices[k] - vertices[i]
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        out[:, c] = 0.5 * np.einsum("ij,ij->i", u, v) / cross
    return out


def assemble_laplacian(mesh_or_vertices, triangles=None, clamp_negative=False):
    """Cotangent stiffness matrix and barycentric lumped masses.

    Off-diagonal entries are ``-w_ij`` with ``w_ij = (cot a + cot b) / 2`` and
    the diagonal is minus the off-diagonal row sum, so the matrix is positive
    semi-definite with the constant vector in its kernel. Boundary edges get a
    single cotangent (natural boundary condition).

    Returns
    -------
    stiffness : scipy.sparse.csr_matrix
    masses : ndarray, shape (N,)
    """
    if triangles is None:
        vertices, triangles = mesh_or_vertices.vertices, mesh_or_vertices.triangles
    else:
        vertices = mesh_or_vertices
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    n = len(vertices)
    if len(triangles) == 0:
        raise DegenerateGeometry("no non-degenerate triangles")
    areas = triangle_areas(vertices, triangles)
    if not np.all(areas > 0):
        raise DegenerateGeometry("zero-area triangle in operator assembly")

    cot = cotangent_weights(vertices, triangles)
    if clamp_negative:
        cot = np.maximum(cot, 0.0)
    rows, cols, vals = [], [], []
    for c in range(3):
        j, k = triangles[:, (c + 1) % 3], triangles[:, (c + 2) % 3]
        rows += [j, k]
        cols += [k, j]
        vals += [-cot[:, c], -cot[:, c]]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    off = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    stiffness = (off + sparse.diags(diag)).tocsr()
    # exact symmetry regardless of summation order
    stiffness = ((stiffness + stiffness.T) * 0.5).tocsr()
    stiffness.sort_indices()

    masses = np.zeros(n)
    for c in range(3):
        np.add.at(masses, triangles[:, c], areas / 3.0)
    return stiffness, masses


def edges_of(triangles):
    """Unique undirected edges as an (E, 2) array with ``i < j``."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable triangle mesh with its Laplace-Beltrami operators.

    Build with :meth:`from_arrays`; the plain constructor trusts its inputs.
    ``scale`` and ``offset`` record the normalization applied on load so that
    ``raw = vertices / scale + offset``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    vertex_masses: np.ndarray
    stiffness: sparse.csr_matrix
    normals: np.ndarray
    scale: float = 1.0
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    name: str = ""

    @classmethod
    def from_arrays(cls, vertices, triangles, normalize=True, clamp_negative=False, name=""):
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles)
        if triangles.size == 0:
            raise EmptyMesh("mesh has no faces")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise NonTriangleFace(f"faces must be triangles, got shape {triangles.shape}")
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise DegenerateGeometry(f"vertices must be (N, 3), got {vertices.shape}")
        triangles = triangles.astype(np.int64)
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise IndexOutOfRange("triangle index outside vertex range")
        if not np.all(np.isfinite(vertices)):
            raise DegenerateGeometry("non-finite vertex coordinates")

        areas = triangle_areas(vertices, triangles)
        total = areas.sum()
        if not total > 0:
            raise DegenerateGeometry("mesh has zero surface area")
        keep = areas > DEGENERATE_AREA_RATIO * total
        if not keep.all():
            logger.warning("dropping %d degenerate triangles", int((~keep).sum()))
            triangles = triangles[keep]
            areas = areas[keep]
        if len(triangles) == 0:
            raise DegenerateGeometry("all faces are degenerate")

        used = np.zeros(len(vertices), dtype=bool)
        used[triangles.ravel()] = True
        if not used.all():
            logger.warning("dropping %d unreferenced vertices", int((~used).sum()))
            remap = np.cumsum(used) - 1
            vertices = vertices[used]
            triangles = remap[triangles]

        _warn_nonmanifold(triangles)

        scale, offset = 1.0, np.zeros(3)
        if normalize:
            tri_centroids = vertices[triangles].mean(axis=1)
            offset = (areas[:, None] * tri_centroids).sum(axis=0) / areas.sum()
            scale = 1.0 / np.sqrt(areas.sum())
            vertices = (vertices - offset) * scale

        stiffness, masses = assemble_laplacian(vertices, triangles, clamp_negative)
        normals = vertex_normals(vertices, triangles)
        return cls(
            vertices=_frozen(vertices),
            triangles=_frozen(triangles),
            vertex_masses=_frozen(masses),
            stiffness=stiffness,
            normals=_frozen(normals),
            scale=float(scale),
            offset=_frozen(np.asarray(offset, dtype=float)),
            name=name,
        )

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.triangles)

    @property
    def area(self):
        return float(self.vertex_masses.sum())

    def edges(self):
        return edges_of(self.triangles)

    def transformed(self, rotation=None, translation=None):
        """Rigidly moved copy; intrinsic operators are reused."""
        v = np.asarray(self.vertices)
        n = np.asarray(self.normals)
        if rotation is not None:
            rotation = np.asarray(rotation, dtype=float)
            v = v @ rotation.T
            n = n @ rotation.T
        if translation is not None:
            v = v + np.asarray(translation, dtype=float)
        return TriMesh(
            vertices=_frozen(v),
            triangles=self.triangles,
            vertex_masses=self.vertex_masses,
            stiffness=self.stiffness,
            normals=_frozen(n),
            scale=self.scale,
            offset=self.offset,
            name=self.name,
        )

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.triangles, dtype=np.int64).tobytes())
        return h.hexdigest()


def _warn_nonmanifold(triangles):
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e.sort(axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    bad = int((counts > 2).sum())
    if bad:
        logger.warning("mesh has %d non-manifold edges", bad)


def edge_graph(mesh):
    """Symmetric sparse adjacency weighted by Euclidean edge length."""
    e = mesh.edges()
    lengths = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    n = mesh.n_vertices
    g = sparse.coo_matrix((lengths, (e[:, 0], e[:, 1])), shape=(n, n))
    return (g + g.T).tocsr()


def geodesic_distances(mesh, source_vertex):
    """Dijkstra distances over the edge graph from one vertex."""
    source_vertex = int(source_vertex)
    if not 0 <= source_vertex < mesh.n_vertices:
        raise IndexOutOfRange(f"vertex {source_vertex} not in [0, {mesh.n_vertices})")
    d = csgraph.dijkstra(edge_graph(mesh), directed=False, indices=source_vertex)
    if np.isinf(d).any():
        logger.warning("%d vertices unreachable from %d", int(np.isinf(d).sum()), source_vertex)
    return d


def geodesic_matrix(mesh, sources):
    """Rows of graph-geodesic distances for each vertex in ``sources``."""
    sources = np.asarray(sources, dtype=np.int64)
    if sources.size and (sources.min() < 0 or sources.max() >= mesh.n_vertices):
        raise IndexOutOfRange("source vertex out of range")
    return csgraph.dijkstra(edge_graph(mesh), directed=False, indices=sources)


def one_ring(mesh):
    """List of neighbor index arrays, one per vertex."""
    e = mesh.edges()
    n = mesh.n_vertices
    adj = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    adj = (adj + adj.T).tocsr()
    return [adj.indices[adj.indptr[i]:adj.indptr[i + 1]] for i in range(n)]


@dataclass(frozen=True, eq=False)
class PointMap:
    """Discrete correspondence stored as one index per domain vertex.

    ``assignments[i]`` is the codomain vertex matched to domain vertex ``i``.
    The default direction matches the pipeline's ``P``: every target vertex
    picks one source vertex.
    """

    assignments: np.ndarray
    direction: str = "target_to_source"
    codomain_size: int | None = None

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64)
        if a.ndim != 1:
            raise IndexOutOfRange("assignments must be one-dimensional")
        if a.size and a.min() < 0:
            raise IndexOutOfRange("negative vertex index in point map")
        if self.codomain_size is not None and a.size and a.max() >= self.codomain_size:
            raise IndexOutOfRange("point map index exceeds codomain size")
        object.__setattr__(self, "assignments", _frozen(a))

    def __len__(self):
        return len(self.assignments)

    def as_matrix(self, n_codomain=None):
        """The 0/1 matrix with one nonzero per row."""
        n = n_codomain or self.codomain_size or int(self.assignments.max()) + 1
        m = len(self.assignments)
        return sparse.csr_matrix((np.ones(m), (np.arange(m), self.assignments)), shape=(m, n))

    @classmethod
    def identity(cls, n, direction="target_to_source"):
        return cls(np.arange(n), direction, n)
