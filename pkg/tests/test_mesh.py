import math

import numpy as np
import pytest
import scipy.linalg

from shellmatch import shapes
from shellmatch.errors import (DegenerateGeometry, EmptyMesh, IndexOutOfRange, InputError,
                               NonTriangleFace, ParseError)
from shellmatch.mesh import (PointMap, TriMesh, assemble_laplacian, geodesic_distances,
                             geodesic_matrix, one_ring, triangle_areas)
from shellmatch.meshio import (load_mesh, read_correspondence, read_off, read_ply, save_mesh,
                               write_correspondence, write_off, write_ply)

from conftest import tetrahedron


def write_text(path, text):
    path.write_text(text)
    return path


def test_tetrahedron_off_loads_normalized(tmp_path):
    v, f = tetrahedron()
    p = tmp_path / "tet.off"
    write_off(p, v, f)
    m = load_mesh(p)
    assert (m.n_vertices, m.n_faces) == (4, 4)
    assert m.area == pytest.approx(1.0, abs=1e-12)
    assert np.asarray(m.vertex_masses).sum() == pytest.approx(1.0, abs=1e-12)


def test_icosphere_row_sums_vanish(sphere):
    assert sphere.n_vertices == 642
    rows = np.asarray(sphere.stiffness.sum(axis=1)).ravel()
    assert np.abs(rows).max() < 1e-10


def test_quad_face_rejected(tmp_path):
    p = write_text(tmp_path / "quad.off", "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    with pytest.raises(NonTriangleFace):
        load_mesh(p)


def test_ply_quad_rejected(tmp_path):
    text = ("ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\n"
            "property float z\nelement face 1\nproperty list uchar int vertex_indices\n"
            "end_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    with pytest.raises(NonTriangleFace):
        load_mesh(write_text(tmp_path / "quad.ply", text))


def test_malformed_and_empty_files(tmp_path):
    with pytest.raises(ParseError):
        load_mesh(write_text(tmp_path / "bad.off", "OFF\n3 1 0\n0 0 0\n1 0\n"))
    with pytest.raises(EmptyMesh):
        load_mesh(write_text(tmp_path / "empty.off", "OFF\n3 0 0\n0 0 0\n1 0 0\n0 1 0\n"))
    with pytest.raises(IndexOutOfRange):
        load_mesh(write_text(tmp_path / "idx.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n"))
    with pytest.raises(InputError, match="nope.off"):
        load_mesh(tmp_path / "nope.off")
    with pytest.raises(ParseError):
        load_mesh(write_text(tmp_path / "x.obj", "v 0 0 0\n"))


def test_square_diagonal_weight_is_zero():
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    f = np.array([[0, 1, 2], [0, 2, 3]])
    S, masses = assemble_laplacian(v, f)
    assert abs(S[0, 2]) < 1e-15
    # boundary edges carry half of one cotangent: cot 45 / 2
    assert S[0, 1] == pytest.approx(-0.5)
    assert masses == pytest.approx([1 / 3, 1 / 6, 1 / 3, 1 / 6])


def test_sphere_pencil_kernel_and_first_triple(small_sphere):
    S = small_sphere.stiffness.toarray()
    M = np.diag(small_sphere.vertex_masses)
    lam, vec = scipy.linalg.eigh(S, M)
    assert abs(lam[0]) < 1e-10
    assert np.ptp(vec[:, 0]) < 1e-8
    triple = lam[1:4]
    assert triple.max() / triple.min() < 1.05


def test_invariants(sphere, biped_small):
    for m in (sphere, biped_small):
        S = m.stiffness
        assert abs(S - S.T).max() == 0
        assert np.abs(S @ np.ones(m.n_vertices)).max() <= 1e-10 * abs(S).max()
        assert np.all(np.asarray(m.vertex_masses) > 0)
        assert np.allclose(np.linalg.norm(m.normals, axis=1), 1.0, atol=1e-9)
        assert triangle_areas(m.vertices, m.triangles).min() > 1e-12


def test_normals_point_outward(sphere):
    radial = np.asarray(sphere.vertices)
    assert np.all(np.einsum("ij,ij->i", radial, sphere.normals) > 0)


def test_scale_invariance_of_normalization():
    v, f = shapes.icosphere(2)
    v = v + np.array([0.3, -1.0, 2.0])
    a = TriMesh.from_arrays(v, f)
    b = TriMesh.from_arrays(7.3 * v, f)
    assert np.abs(np.asarray(a.vertices) - np.asarray(b.vertices)).max() <= 1e-9


def test_degenerate_faces_dropped():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], dtype=float)
    f = np.array([[0, 1, 2], [0, 1, 3]])  # second face is collinear
    m = TriMesh.from_arrays(v, f)
    assert m.n_faces == 1 and m.n_vertices == 3


def test_all_degenerate_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
    with pytest.raises(DegenerateGeometry):
        TriMesh.from_arrays(v, np.array([[0, 1, 2]]))


def _strip():
    # bottom vertices 0-1-2 on a line, apexes far above so paths follow the line
    v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0.5, 5, 0], [1.5, 5, 0]], dtype=float)
    f = np.array([[0, 1, 3], [1, 2, 4], [1, 4, 3]])
    return TriMesh.from_arrays(v, f, normalize=False)


def test_geodesic_chain():
    d = geodesic_distances(_strip(), 0)
    assert d[:3] == pytest.approx([0.0, 1.0, 2.0])


def test_geodesic_sphere_antipodal(sphere):
    v = np.asarray(sphere.vertices)
    a = 0
    b = int(np.argmin(v @ v[a]))
    radius = np.linalg.norm(v, axis=1).mean()
    d = geodesic_distances(sphere, a)
    assert d[a] == 0
    assert abs(d[b] - math.pi * radius) <= 0.1 * math.pi * radius


def test_geodesic_symmetric_and_triangle_inequality(small_sphere):
    D = geodesic_matrix(small_sphere, np.arange(small_sphere.n_vertices))
    # same path, summed in opposite order
    assert np.abs(D - D.T).max() <= 1e-12
    i, j, k = 3, 50, 120
    assert D[i, k] <= D[i, j] + D[j, k] + 1e-12


def test_geodesic_bad_index(small_sphere):
    with pytest.raises(IndexOutOfRange):
        geodesic_distances(small_sphere, small_sphere.n_vertices)


def test_one_ring(small_sphere):
    rings = one_ring(small_sphere)
    assert all(5 <= len(r) <= 6 for r in rings)


@pytest.mark.parametrize("ext", [".off", ".ply"])
def test_round_trip_nine_digits(tmp_path, rng, ext):
    v, f = shapes.icosphere(1)
    v = v * rng.uniform(0.5, 3.0) + rng.normal(size=3)
    p = tmp_path / f"m{ext}"
    save_mesh(p, v, f)
    v2, f2 = (read_off if ext == ".off" else read_ply)(p)
    expected = np.array([[float(f"{x:.9g}") for x in row] for row in v])
    assert np.array_equal(v2, expected)
    assert np.array_equal(f2, f)


def test_ply_with_colors(tmp_path):
    v, f = shapes.icosphere(1)
    p = tmp_path / "c.ply"
    write_ply(p, v, f, colors=np.zeros((len(v), 3), dtype=int))
    v2, f2 = read_ply(p)
    assert v2.shape == v.shape and np.array_equal(f2, f)


def test_point_map_validation():
    pm = PointMap(np.array([0, 2, 1]), codomain_size=3)
    assert np.asarray(pm.as_matrix().sum(axis=1)).ravel().tolist() == [1, 1, 1]
    with pytest.raises(IndexOutOfRange):
        PointMap(np.array([0, 3]), codomain_size=3)
    with pytest.raises(IndexOutOfRange):
        PointMap(np.array([-1, 0]))


@pytest.mark.parametrize("one_based", [False, True])
def test_correspondence_round_trip(tmp_path, one_based):
    pm = PointMap(np.array([4, 0, 3, 3, 1]), codomain_size=5)
    p = tmp_path / "c.txt"
    write_correspondence(p, pm, one_based)
    first = int(p.read_text().split()[0])
    assert first == 4 + int(one_based)
    back = read_correspondence(p, one_based, codomain_size=5)
    assert np.array_equal(back.assignments, pm.assignments)


def test_transformed_reuses_operators(small_sphere):
    R = shapes.octahedral_rotations()[5]
    moved = small_sphere.transformed(R, np.ones(3))
    assert moved.stiffness is small_sphere.stiffness
    assert np.allclose(moved.vertices, np.asarray(small_sphere.vertices) @ R.T + 1)
    assert np.allclose(moved.normals, np.asarray(small_sphere.normals) @ R.T)
