import numpy as np
import pytest
import scipy.linalg

from shellmatch import shapes
from shellmatch.errors import KTooLarge
from shellmatch.mesh import TriMesh
from shellmatch.spectral import (ShellLevel, cached_basis, compute_basis, l2_norm, load_basis,
                                 required_basis_size, save_basis, smooth_shell,
                                 spectral_reconstruct, transition_bound,
                                 verify_transition_bound)


def dense_pencil(mesh):
    return scipy.linalg.eigh(mesh.stiffness.toarray(), np.diag(mesh.vertex_masses))


def test_first_eigenpair_is_constant(sphere):
    b = compute_basis(sphere, 1)
    assert abs(b.eigenvalues[0]) < 1e-8
    assert np.allclose(b.eigenvectors[:, 0], 1.0, atol=1e-8)


@pytest.mark.parametrize("dense_max", [0, 10_000])
def test_matches_dense_oracle(grid_mesh, dense_max):
    lam, _ = dense_pencil(grid_mesh)
    b = compute_basis(grid_mesh, 30, dense_max=dense_max)
    assert abs(b.eigenvalues[0]) < 1e-8
    assert np.allclose(b.eigenvalues[1:], lam[1:30], rtol=1e-6, atol=0)


@pytest.mark.parametrize("dense_max", [0, 10_000])
def test_basis_invariants(sphere, dense_max):
    b = compute_basis(sphere, 40, dense_max=dense_max)
    M = np.asarray(sphere.vertex_masses)
    G = b.eigenvectors.T @ (M[:, None] * b.eigenvectors)
    assert np.abs(G - np.eye(40)).max() <= 1e-8
    assert np.all(np.diff(b.eigenvalues) >= 0)
    assert b.eigenvalues[0] <= 1e-8 and b.eigenvalues.min() >= -1e-10


def test_k_too_large(small_sphere):
    with pytest.raises(KTooLarge):
        compute_basis(small_sphere, small_sphere.n_vertices)


def test_sign_convention_and_determinism(biped_small):
    a = compute_basis(biped_small, 20)
    b = compute_basis(biped_small, 20)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)
    M = np.asarray(biped_small.vertex_masses)
    third = (M[:, None] * a.eigenvectors[:, 1:] ** 3).sum(axis=0)
    assert np.all(third > 0)


def test_reconstruct_constant_level_gives_centroid(sphere_basis, sphere):
    X = np.asarray(sphere.vertices) + np.array([0.3, 0.0, -0.2])
    T1 = spectral_reconstruct(sphere_basis, X, 1)
    M = np.asarray(sphere.vertex_masses)
    centroid = (M[:, None] * X).sum(axis=0) / M.sum()
    assert np.allclose(T1, centroid, atol=1e-12)


def test_reconstruction_is_projector(sphere_basis, sphere):
    T = spectral_reconstruct(sphere_basis, sphere.vertices, 12)
    assert np.abs(spectral_reconstruct(sphere_basis, T, 12) - T).max() <= 1e-9


def test_completeness_with_kernel(small_sphere):
    # N - 1 eigenpairs miss exactly one direction; adding it back recovers X
    X = np.asarray(small_sphere.vertices)
    n = small_sphere.n_vertices
    b = compute_basis(small_sphere, n - 1)
    T = spectral_reconstruct(b, X, n - 1)
    M = np.asarray(small_sphere.vertex_masses)
    _, vec = dense_pencil(small_sphere)
    last = vec[:, -1:]
    missing = last @ (last.T @ (M[:, None] * X))
    assert np.abs(T + missing - X).max() <= 1e-6
    assert l2_norm(X - T, M) == pytest.approx(l2_norm(missing, M), abs=1e-8)


def test_error_monotone_in_k(sphere_basis, sphere):
    M = np.asarray(sphere.vertex_masses)
    X = np.asarray(sphere.vertices)
    errs = [l2_norm(spectral_reconstruct(sphere_basis, X, k) - X, M) for k in range(1, 50)]
    assert np.all(np.diff(errs) <= 1e-12)


def test_sphere_blob_improves_with_k(sphere_basis, sphere):
    X = np.asarray(sphere.vertices)
    r0 = np.linalg.norm(X, axis=1).mean()

    def radial_dev(K):
        T = spectral_reconstruct(sphere_basis, X, K)
        return np.abs(np.linalg.norm(T, axis=1) - r0).max()

    assert radial_dev(9) < radial_dev(4)


def test_shell_weights():
    w = ShellLevel(7.3, 0.5).weights(40)
    assert np.all(np.diff(w) < 0)
    assert np.all((w > 0) & (w < 1))


def test_sharp_sigmoid_limit(sphere_basis, sphere):
    X = np.asarray(sphere.vertices)
    K = 9
    T = spectral_reconstruct(sphere_basis, X, K)
    # the weight at k = K is exactly 1/2, so the indicator limit sits at K + 1/2
    S = smooth_shell(sphere_basis, X, ShellLevel(K + 0.5, 100.0))
    assert np.abs(S - T).max() <= 1e-6 * np.abs(T).max()
    mid = smooth_shell(sphere_basis, X, ShellLevel(K, 100.0))
    T_prev = spectral_reconstruct(sphere_basis, X, K - 1)
    assert np.abs(mid - 0.5 * (T + T_prev)).max() <= 1e-6 * np.abs(T).max()


def test_shell_beyond_basis_matches_full_reconstruction(sphere_basis, sphere):
    X = np.asarray(sphere.vertices)
    sigma = 0.5
    k_total = sphere_basis.size
    S = smooth_shell(sphere_basis, X, ShellLevel(k_total + 7 / sigma, sigma))
    T = spectral_reconstruct(sphere_basis, X, k_total)
    M = np.asarray(sphere.vertex_masses)
    assert l2_norm(S - T, M) <= 1e-3 * l2_norm(T, M)


def test_shell_is_linear(sphere_basis, rng):
    X = rng.normal(size=(sphere_basis.eigenvectors.shape[0], 3))
    Z = rng.normal(size=X.shape)
    lvl = ShellLevel(11.5, 0.5)
    lhs = smooth_shell(sphere_basis, 2.0 * X - 3.0 * Z, lvl)
    rhs = 2.0 * smooth_shell(sphere_basis, X, lvl) - 3.0 * smooth_shell(sphere_basis, Z, lvl)
    assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(lhs).max())


def test_shell_continuous_in_k(sphere_basis, sphere):
    X = np.asarray(sphere.vertices)
    a = smooth_shell(sphere_basis, X, ShellLevel(10.0))
    b = smooth_shell(sphere_basis, X, ShellLevel(10.001))
    assert np.abs(a - b).max() < 1e-3


def test_bound_value():
    assert transition_bound(0.5) == pytest.approx(0.3935, abs=1e-4)


@pytest.mark.parametrize("sigma", [0.25, 0.5, 1.0, 2.0])
def test_transition_bound_holds(sphere_basis, sphere, sigma):
    top = int(sphere_basis.size - np.ceil(7 / sigma)) - 1
    ratios = verify_transition_bound(sphere_basis, sphere.vertices, sigma, range(1, top))
    assert np.all(ratios <= transition_bound(sigma) + 1e-9)


def test_indicator_exceeds_bound(sphere_basis, sphere):
    ratios = verify_transition_bound(sphere_basis, sphere.vertices, None, range(1, 40),
                                     indicator=True)
    assert ratios.max() > transition_bound(0.5)


def test_required_basis_size():
    assert required_basis_size(500, 0.5) == 514
    assert required_basis_size(20, 0.5) == 34


def test_basis_cache(tmp_path, small_sphere, monkeypatch):
    b = cached_basis(small_sphere, 10, cache_dir=str(tmp_path))
    files = list(tmp_path.glob("*.npz"))
    assert len(files) == 1
    again = cached_basis(small_sphere, 10, cache_dir=str(tmp_path))
    assert np.array_equal(again.eigenvectors, b.eigenvectors)
    # stale cache: a different mesh with the same file is rejected
    other = small_sphere.transformed(np.eye(3), np.ones(3))
    assert load_basis(files[0], other) is None
    env_dir = tmp_path / "env"
    monkeypatch.setenv("SHELLMATCH_CACHE", str(env_dir))
    cached_basis(small_sphere, 10)
    assert len(list(env_dir.glob("*.npz"))) == 1


def test_save_load_round_trip(tmp_path, small_sphere):
    b = compute_basis(small_sphere, 8)
    p = tmp_path / "b.npz"
    save_basis(p, b)
    c = load_basis(p, small_sphere)
    assert np.array_equal(c.eigenvalues, b.eigenvalues)


def test_decimated_humanoid_basis():
    v, f = shapes.biped(spacing=0.05, target_vertices=600)
    m = TriMesh.from_arrays(v, f)
    b = compute_basis(m, 20)
    assert b.size == 20 and m.n_vertices <= 600
