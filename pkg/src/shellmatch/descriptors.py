"""Pointwise descriptors feeding the functional-map feature term."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSpectrum, DimensionMismatch, NonFiniteValue
from .meshio import read_matrix


@dataclass(frozen=True, eq=False)
class DescriptorField:
    values: np.ndarray
    kind: str
    times: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.values.shape[1]


def normalize_columns(values, masses):
    """Scale every column to unit mass-weighted L2 norm (zero columns stay zero)."""
    norms = np.sqrt((masses[:, None] * values**2).sum(axis=0))
    norms[norms == 0] = 1.0
    return values / norms


def hks_times(eigenvalues, num_times=16):
    """Log-spaced diffusion times covering the informative part of the spectrum."""
    lam = np.asarray(eigenvalues)
    if len(lam) < 2 or lam[1] <= 1e-12:
        raise DegenerateSpectrum("need a positive second eigenvalue for HKS times")
    t_min = 4 * np.log(10) / lam[-1]
    t_max = 4 * np.log(10) / lam[1]
    return np.geomspace(t_min, t_max, num_times)


def compute_hks(basis, num_times=16, times=None):
    """Heat kernel signature ``h(x, t) = sum_k exp(-lam_k t) phi_k(x)^2``.

    Pass ``times`` to evaluate two shapes at the same diffusion times.
    """
    if basis.size < 2:
        raise DegenerateSpectrum("HKS needs at least two eigenpairs")
    if times is None:
        times = hks_times(basis.eigenvalues, num_times)
    times = np.asarray(times, dtype=float)
    decay = np.exp(-np.outer(basis.eigenvalues, times))
    values = (basis.eigenvectors**2) @ decay
    return DescriptorField(normalize_columns(values, basis.masses), "HKS", times)


def descriptor_from_array(values, mesh, kind="external"):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != mesh.n_vertices:
        raise DimensionMismatch(
            f"descriptor has {values.shape[0]} rows, mesh has {mesh.n_vertices} vertices"
        )
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue("descriptor contains NaN or Inf")
    return DescriptorField(normalize_columns(values, np.asarray(mesh.vertex_masses)), kind)


def load_external_descriptors(path, mesh):
    """Read an ASCII matrix (one row per vertex) such as precomputed SHOT."""
    return descriptor_from_array(read_matrix(path), mesh)


def concatenate(fields):
    fields = list(fields)
    if not fields:
        raise ValueError("no descriptor fields given")
    values = np.hstack([f.values for f in fields])
    kind = "+".join(f.kind for f in fields)
    return DescriptorField(values, kind)
