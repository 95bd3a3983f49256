import numpy as np
import pytest

from shellmatch import shapes
from shellmatch.descriptors import (compute_hks, concatenate, descriptor_from_array,
                                    hks_times, load_external_descriptors)
from shellmatch.errors import DegenerateSpectrum, DimensionMismatch, NonFiniteValue
from shellmatch.mesh import TriMesh
from shellmatch.spectral import SpectralBasis, compute_basis


def col_norms(values, masses):
    return np.sqrt((masses[:, None] * values**2).sum(axis=0))


def test_hks_constant_on_sphere(sphere_basis):
    h = compute_hks(sphere_basis, 16).values
    spread = (h.max(axis=0) - h.min(axis=0)) / h.mean(axis=0)
    assert spread.max() <= 0.02


def test_hks_columns_normalized(biped_small):
    b = compute_basis(biped_small, 30)
    h = compute_hks(b, 8)
    assert h.values.shape == (biped_small.n_vertices, 8)
    assert np.allclose(col_norms(h.values, b.masses), 1.0, atol=1e-9)
    assert h.kind == "HKS" and len(h.times) == 8


def test_hks_times_span():
    lam = np.array([0.0, 2.0, 5.0, 40.0])
    t = hks_times(lam, 5)
    assert t[0] == pytest.approx(4 * np.log(10) / 40.0)
    assert t[-1] == pytest.approx(4 * np.log(10) / 2.0)


def test_spike_has_largest_small_time_hks():
    v, f = shapes.icosphere(3)
    spike = 17
    v = v.copy()
    v[spike] *= 1.6
    m = TriMesh.from_arrays(v, f)
    b = compute_basis(m, 120)
    h = compute_hks(b, 16).values
    assert int(np.argmax(h[:, 0])) == spike


def test_hks_sign_invariant(sphere_basis, rng):
    flips = rng.choice([-1.0, 1.0], size=sphere_basis.size)
    flipped = SpectralBasis(sphere_basis.eigenvalues, sphere_basis.eigenvectors * flips,
                            sphere_basis.masses, "")
    a = compute_hks(sphere_basis, 10).values
    b = compute_hks(flipped, 10).values
    assert np.abs(a - b).max() <= 1e-10


def test_hks_degenerate_spectrum(small_sphere):
    b = compute_basis(small_sphere, 5)
    with pytest.raises(DegenerateSpectrum):
        compute_hks(SpectralBasis(np.zeros(5), b.eigenvectors, b.masses, ""), 4)
    with pytest.raises(DegenerateSpectrum):
        compute_hks(SpectralBasis(b.eigenvalues[:1], b.eigenvectors[:, :1], b.masses, ""), 4)


def test_external_all_ones(tmp_path, small_sphere):
    p = tmp_path / "d.txt"
    np.savetxt(p, np.ones((small_sphere.n_vertices, 1)))
    d = load_external_descriptors(p, small_sphere)
    assert d.values.shape == (small_sphere.n_vertices, 1)
    assert np.allclose(d.values, 1.0, atol=1e-12)


def test_external_wrong_rows(tmp_path, small_sphere):
    p = tmp_path / "d.txt"
    np.savetxt(p, np.ones((small_sphere.n_vertices - 1, 2)))
    with pytest.raises(DimensionMismatch):
        load_external_descriptors(p, small_sphere)


def test_external_nan(small_sphere):
    vals = np.ones((small_sphere.n_vertices, 2))
    vals[3, 1] = np.nan
    with pytest.raises(NonFiniteValue):
        descriptor_from_array(vals, small_sphere)


def test_concatenation_matches_joint_load(tmp_path, small_sphere, rng):
    a = rng.normal(size=(small_sphere.n_vertices, 2))
    b = rng.uniform(size=(small_sphere.n_vertices, 3))
    for name, arr in (("a", a), ("b", b), ("ab", np.hstack([a, b]))):
        np.savetxt(tmp_path / f"{name}.txt", arr)
    joint = load_external_descriptors(tmp_path / "ab.txt", small_sphere)
    parts = concatenate([load_external_descriptors(tmp_path / "a.txt", small_sphere),
                         load_external_descriptors(tmp_path / "b.txt", small_sphere)])
    assert np.abs(joint.values - parts.values).max() <= 1e-12


def test_scale_free(small_sphere, rng):
    vals = rng.uniform(0.1, 1.0, size=(small_sphere.n_vertices, 4))
    a = descriptor_from_array(vals, small_sphere).values
    b = descriptor_from_array(37.5 * vals, small_sphere).values
    assert np.abs(a - b).max() <= 1e-9
