"""Laplace-Beltrami eigenbasis, spectral reconstruction and the smooth-shell operator."""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.special import expit

from .errors import KTooLarge, SolverFailure

logger = logging.getLogger(__name__)

DENSE_MAX_VERTICES = 1500
# shift for shift-invert; the pencil is singular at 0
SHIFT = -1e-3


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    masses: np.ndarray
    mesh_fingerprint: str = ""

    @property
    def size(self):
        return len(self.eigenvalues)

    def truncated(self, k):
        k = int(k)
        if k > self.size:
            raise KTooLarge(f"K={k} exceeds basis size {self.size}")
        return self.eigenvectors[:, :k]

    def coefficients(self, values, k=None):
        """Mass-weighted projections ``Phi^T M values``."""
        phi = self.eigenvectors if k is None else self.truncated(k)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            return phi.T @ (self.masses * values)
        return phi.T @ (self.masses[:, None] * values)


@dataclass(frozen=True)
class ShellLevel:
    """Sigmoid truncation ``s_k = 1 / (1 + exp(sigma (k - K)))`` for k = 1, 2, ..."""

    K: float
    sigma: float = 0.5

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.K > 0:
            raise ValueError("K must be positive")

    def weights(self, k_total):
        k = np.arange(1, int(k_total) + 1, dtype=float)
        return expit(-self.sigma * (k - self.K))


def required_basis_size(k_max, sigma):
    return int(k_max) + int(math.ceil(7.0 / sigma))


def _fix_signs(vecs, masses):
    # third moment is zero only for odd-symmetric modes; then fall back to
    # the largest-magnitude entry
    m3 = (masses[:, None] * vecs**3).sum(axis=0)
    scale = np.sqrt((masses[:, None] * vecs**2).sum(axis=0)) ** 3
    sign = np.sign(m3)
    flat = np.abs(m3) <= 1e-8 * np.maximum(scale, 1e-300)
    if flat.any():
        idx = np.argmax(np.abs(vecs[:, flat]), axis=0)
        sign[flat] = np.sign(vecs[idx, np.flatnonzero(flat)])
    sign[sign == 0] = 1.0
    return vecs * sign


def compute_basis(mesh, k_total, seed=0, dense_max=DENSE_MAX_VERTICES, tol=1e-10):
    """Smallest ``k_total`` eigenpairs of the (stiffness, mass) pencil.

    Eigenvectors are mass-orthonormal. Each eigenvector's sign is chosen so
    that its mass-weighted third moment is positive (largest-magnitude entry
    positive when the third moment vanishes), which makes the output
    deterministic.
    """
    n = mesh.n_vertices
    k_total = int(k_total)
    if k_total < 1:
        raise KTooLarge("basis size must be at least 1")
    if k_total >= n:
        raise KTooLarge(f"K_total={k_total} must be at most N-1={n - 1}")
    stiffness = mesh.stiffness
    masses = np.asarray(mesh.vertex_masses)

    # Lanczos with ncv ~ 2k stops paying off once k is a sizeable fraction of n
    if n <= dense_max or 5 * k_total >= n:
        # lumped mass is diagonal: reduce to a standard symmetric problem
        d = 1.0 / np.sqrt(masses)
        reduced = stiffness.toarray() * d[:, None] * d[None, :]
        try:
            vals, vecs = scipy.linalg.eigh(
                (reduced + reduced.T) / 2, subset_by_index=[0, k_total - 1], driver="evr"
            )
            vecs = vecs * d[:, None]
        except np.linalg.LinAlgError as exc:
            raise SolverFailure(f"dense eigensolve failed: {exc}") from exc
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        try:
            vals, vecs = eigsh(
                stiffness.tocsc(), k=k_total, M=sparse.diags(masses).tocsc(), sigma=SHIFT,
                which="LM", v0=v0, tol=tol, maxiter=300 * k_total,
            )
        except ArpackNoConvergence as exc:
            raise SolverFailure(f"eigsh did not converge: {exc}") from exc
        # Rayleigh-Ritz cleanup restores exact mass-orthonormality
        mv = masses[:, None] * vecs
        a = vecs.T @ (stiffness @ vecs)
        b = vecs.T @ mv
        vals, rot = scipy.linalg.eigh((a + a.T) / 2, (b + b.T) / 2)
        vecs = vecs @ rot

    order = np.argsort(vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    if not np.all(np.isfinite(vals)):
        raise SolverFailure("non-finite eigenvalues")
    vals = np.maximum(vals, 0.0)
    vecs = _fix_signs(vecs, masses)
    return SpectralBasis(
        eigenvalues=_ro(vals), eigenvectors=_ro(vecs), masses=_ro(masses),
        mesh_fingerprint=mesh.fingerprint(),
    )


def _ro(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def cached_basis(mesh, k_total, cache_dir=None, **kwargs):
    """``compute_basis`` with an optional on-disk cache keyed by mesh hash."""
    cache_dir = cache_dir or os.environ.get("SHELLMATCH_CACHE")
    if not cache_dir:
        return compute_basis(mesh, k_total, **kwargs)
    fp = mesh.fingerprint()
    path = os.path.join(cache_dir, f"basis_{fp[:16]}_{int(k_total)}.npz")
    if os.path.exists(path):
        basis = load_basis(path, mesh)
        if basis is not None:
            return basis
    basis = compute_basis(mesh, k_total, **kwargs)
    os.makedirs(cache_dir, exist_ok=True)
    save_basis(path, basis)
    return basis


def save_basis(path, basis):
    np.savez(path, eigenvalues=basis.eigenvalues, eigenvectors=basis.eigenvectors,
             masses=basis.masses, fingerprint=np.array(basis.mesh_fingerprint))


def load_basis(path, mesh=None):
    """Load a cached basis; ``None`` when it belongs to a different mesh."""
    with np.load(path) as data:
        fp = str(data["fingerprint"])
        if mesh is not None and fp != mesh.fingerprint():
            logger.info("basis cache %s is stale, ignoring", path)
            return None
        return SpectralBasis(_ro(data["eigenvalues"]), _ro(data["eigenvectors"]),
                             _ro(data["masses"]), fp)


def spectral_reconstruct(basis, X, K):
    """Projection of ``X`` onto the first ``K`` eigenfunctions."""
    phi = basis.truncated(K)
    X = np.asarray(X, dtype=float)
    return phi @ (phi.T @ (basis.masses[:, None] * X))


def smooth_shell(basis, X, level):
    """Sigmoid-weighted spectral smoothing of ``X``, truncated at the basis size."""
    s = level.weights(basis.size)
    phi = basis.eigenvectors
    X = np.asarray(X, dtype=float)
    return phi @ (s[:, None] * (phi.T @ (basis.masses[:, None] * X)))


def filtered(basis, X, weights):
    """Apply arbitrary per-eigenfunction weights; shared by both smoothers."""
    k = len(weights)
    phi = basis.truncated(k)
    return phi @ (np.asarray(weights)[:, None] * (phi.T @ (basis.masses[:, None] * X)))


def l2_norm(values, masses):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return float(np.sqrt((masses[:, None] * values**2).sum()))


def transition_bound(sigma):
    return abs(1.0 - math.exp(-sigma))


def verify_transition_bound(basis, X, sigma, K_range, indicator=False):
    """Relative change ``|S_{K+1} X - S_K X| / |S_{K+1} X|`` for each K.

    With ``indicator=True`` the sigmoid is replaced by hard truncation, i.e.
    the same ratio for spectral reconstruction.
    """
    ratios = []
    for K in K_range:
        if indicator:
            a = spectral_reconstruct(basis, X, K)
            b = spectral_reconstruct(basis, X, K + 1)
        else:
            a = smooth_shell(basis, X, ShellLevel(K, sigma))
            b = smooth_shell(basis, X, ShellLevel(K + 1, sigma))
        ratios.append(l2_norm(b - a, basis.masses) / l2_norm(b, basis.masses))
    return np.array(ratios)
