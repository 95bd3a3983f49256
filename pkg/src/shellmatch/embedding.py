"""Intrinsic-extrinsic product embeddings of (deformed) smooth shells."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .mesh import vertex_normals
from .spectral import ShellLevel


@dataclass(frozen=True)
class ChannelWeights:
    spectral: float = 1.0
    xyz: float = 1.0
    normal: float = 1.0
    # damp spectral coordinate k by 1/sqrt(1 + lambda_k)
    damping: bool = True

    def scaled(self, c):
        return ChannelWeights(self.spectral * c, self.xyz * c, self.normal * c, self.damping)


@dataclass(frozen=True, eq=False)
class ProductEmbedding:
    spectral_block: np.ndarray
    coord_block: np.ndarray
    normal_block: np.ndarray
    channel_weights: ChannelWeights

    @property
    def width(self):
        return self.spectral_block.shape[1] + 6

    def matrix(self):
        return np.hstack([self.spectral_block, self.coord_block, self.normal_block])


def spectral_count(level, basis_size):
    """Number of spectral coordinates used at a (possibly fractional) level."""
    return int(min(max(1, round(level.K)), basis_size))


def shell_weights(level, basis_size, mode="shell"):
    """Per-eigenfunction smoothing weights: sigmoid shell or hard truncation."""
    if mode == "shell":
        return level.weights(basis_size)
    if mode == "spectral":
        w = np.zeros(basis_size)
        w[:spectral_count(level, basis_size)] = 1.0
        return w
    raise ValueError(f"unknown smoothing mode {mode!r}")


def smoothed_coordinates(basis, coords, level, mode="shell", coefficients=None):
    """Smooth ``coords`` at ``level``; pass cached ``Phi^T M X`` to skip the projection."""
    if coefficients is None:
        coefficients = basis.coefficients(coords)
    w = shell_weights(level, basis.size, mode)
    return basis.eigenvectors @ (w[:, None] * coefficients)


def damping_factors(eigenvalues, k, enabled=True):
    if not enabled:
        return np.ones(k)
    return 1.0 / np.sqrt(1.0 + np.asarray(eigenvalues[:k]))


def _normals(mesh, coords):
    return vertex_normals(coords, mesh.triangles, fallback=np.asarray(mesh.normals))


def embed_target(mesh, basis, level, weights=ChannelWeights(), mode="shell",
                 smoothed=None):
    """Embedding ``(Psi_K, Y_K, n_K)`` of the target at one level."""
    k = spectral_count(level, basis.size)
    if smoothed is None:
        smoothed = smoothed_coordinates(basis, mesh.vertices, level, mode)
    spec = basis.eigenvectors[:, :k] * damping_factors(basis.eigenvalues, k, weights.damping)
    return ProductEmbedding(
        spectral_block=weights.spectral * spec,
        coord_block=weights.xyz * smoothed,
        normal_block=weights.normal * _normals(mesh, smoothed),
        channel_weights=weights,
    )


def pseudo_inverse(C, orthogonal=True):
    return C.T if orthogonal else np.linalg.pinv(C)


def embed_source_morphed(mesh, basis, level, C, tau, weights=ChannelWeights(), mode="shell",
                         smoothed=None, orthogonal=True):
    """Morphed source embedding ``(Phi_K C^+, X_K + Phi_K tau, n*_K)``."""
    k = spectral_count(level, basis.size)
    C = np.asarray(C, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if C.shape != (k, k):
        raise DimensionMismatch(f"C has shape {C.shape}, level needs ({k}, {k})")
    if tau.shape != (k, 3):
        raise DimensionMismatch(f"tau has shape {tau.shape}, level needs ({k}, 3)")
    if smoothed is None:
        smoothed = smoothed_coordinates(basis, mesh.vertices, level, mode)
    phi = basis.eigenvectors[:, :k]
    deformed = smoothed + phi @ tau
    spec = (phi * damping_factors(basis.eigenvalues, k, weights.damping)) @ pseudo_inverse(C, orthogonal)
    return ProductEmbedding(
        spectral_block=weights.spectral * spec,
        coord_block=weights.xyz * deformed,
        normal_block=weights.normal * _normals(mesh, deformed),
        channel_weights=weights,
    )


def spectral_colors(basis, k=3):
    """First non-constant spectral coordinates mapped to 8-bit RGB."""
    phi = basis.eigenvectors[:, 1:1 + k]
    lo, hi = phi.min(axis=0), phi.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    rgb = np.zeros((len(phi), 3))
    rgb[:, :phi.shape[1]] = (phi - lo) / span
    return np.round(255 * rgb).astype(np.int64)


__all__ = [
    "ChannelWeights", "ProductEmbedding", "ShellLevel", "embed_target",
    "embed_source_morphed", "smoothed_coordinates", "spectral_colors",
]
