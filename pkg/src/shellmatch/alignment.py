"""Subproblem solvers: nearest-neighbour point map, orthogonal functional map,
and the as-rigid-as-possible regularised displacement."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import DimensionMismatch, SolverFailure
from .mesh import PointMap, edges_of

logger = logging.getLogger(__name__)


class RankDeficiencyWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class FunctionalMap:
    C: np.ndarray
    orthogonal: bool = True
    singular_values: np.ndarray | None = None

    @property
    def k(self):
        return self.C.shape[0]


@dataclass(frozen=True, eq=False)
class Displacement:
    """Displacement coefficients ``tau`` (K x 3) in the source eigenbasis."""

    tau: np.ndarray
    rotations: np.ndarray | None = None
    energies: tuple = ()

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        if tau.ndim != 2 or tau.shape[1] != 3:
            raise DimensionMismatch(f"tau must be (K, 3), got {tau.shape}")
        if not np.all(np.isfinite(tau)):
            raise SolverFailure("non-finite displacement coefficients")
        object.__setattr__(self, "tau", tau)

    @property
    def k(self):
        return self.tau.shape[0]

    def padded(self, k):
        """Truncate or zero-pad to ``k`` rows."""
        out = np.zeros((k, 3))
        n = min(k, self.k)
        out[:n] = self.tau[:n]
        return Displacement(out)


# ------------------------------------------------------------ point map

def solve_point_map(source_emb, target_emb, workers=1):
    """Nearest source row for every target row; ties go to the lowest index."""
    src = source_emb.matrix() if hasattr(source_emb, "matrix") else np.asarray(source_emb)
    tgt = target_emb.matrix() if hasattr(target_emb, "matrix") else np.asarray(target_emb)
    return PointMap(nearest_rows(src, tgt, workers), "target_to_source", len(src))


def nearest_rows(src, tgt, workers=1, chunk=1024):
    """Index of the nearest ``src`` row for each ``tgt`` row (exact, lowest index on ties)."""
    src = np.asarray(src, dtype=float)
    tgt = np.asarray(tgt, dtype=float)
    if src.shape[1] != tgt.shape[1]:
        raise DimensionMismatch(f"embedding widths differ: {src.shape[1]} vs {tgt.shape[1]}")
    if src.shape[1] <= 12:
        return _nearest_kdtree(src, tgt, workers)
    # dense distances through BLAS; rows with near-ties are re-checked exactly
    sq_s = np.einsum("ij,ij->i", src, src)
    out = np.empty(len(tgt), dtype=np.int64)
    for lo in range(0, len(tgt), chunk):
        t = tgt[lo:lo + chunk]
        sq_t = np.einsum("ij,ij->i", t, t)
        d2 = sq_t[:, None] + sq_s[None, :] - 2.0 * (t @ src.T)
        best = np.argmin(d2, axis=1)
        dmin = d2[np.arange(len(t)), best]
        slack = 1e-9 * (sq_t + sq_s.max()) + 1e-300
        near = d2 <= (dmin + slack)[:, None]
        out[lo:lo + chunk] = best
        for r in np.flatnonzero(near.sum(axis=1) > 1):
            cand = np.flatnonzero(near[r])
            diff = src[cand] - t[r]
            exact = np.einsum("ij,ij->i", diff, diff)
            out[lo + r] = cand[exact == exact.min()].min()
    return out


def _nearest_kdtree(src, tgt, workers):
    tree = cKDTree(src)
    k = min(2, len(src))
    dist, idx = tree.query(tgt, k=k, workers=workers)
    if k == 1:
        return idx.astype(np.int64)
    best = idx[:, 0].astype(np.int64)
    tied = np.flatnonzero(dist[:, 1] == dist[:, 0])
    for m in tied:
        cand = tree.query_ball_point(tgt[m], dist[m, 0] * (1 + 1e-12) + 1e-300)
        cand = np.asarray(cand, dtype=np.int64)
        d = np.linalg.norm(src[cand] - tgt[m], axis=1)
        best[m] = cand[d == d.min()].min()
    return best


def alignment_term(point_map, source_emb, target_emb, target_masses):
    """Mass-weighted ``|P X* - Y|^2`` over target vertices."""
    src = source_emb.matrix() if hasattr(source_emb, "matrix") else np.asarray(source_emb)
    tgt = target_emb.matrix() if hasattr(target_emb, "matrix") else np.asarray(target_emb)
    r = src[point_map.assignments] - tgt
    return float((np.asarray(target_masses) * (r * r).sum(axis=1)).sum())


# ------------------------------------------------------- functional map

def feature_coefficients(basis, descriptor_values, k):
    """``Phi_K^dagger F = Phi_K^T M F``."""
    return basis.coefficients(descriptor_values, k)


def feature_energy(C, feature_coeffs):
    if feature_coeffs is None:
        return 0.0
    a, b = feature_coeffs
    return float(np.sum((C @ a - b) ** 2))


def solve_functional_map(source_spectral, target_spectral, target_masses, point_map,
                         feature_coeffs=None, lambda_feat=0.0):
    """Orthogonal ``C`` minimising the spectral alignment plus feature term.

    ``source_spectral`` / ``target_spectral`` are the (weighted) spectral
    blocks of the two embeddings before applying ``C``. The minimiser of
    ``sum_m w_m |C a_p(m) - b_m|^2 + lambda |C A_F - B_G|^2`` over orthogonal
    ``C`` is ``U V^T`` from the SVD of ``H = sum_m w_m b_m a_p(m)^T + lambda B_G A_F^T``.
    """
    a = np.asarray(source_spectral)[point_map.assignments]
    b = np.asarray(target_spectral)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch("spectral blocks have different widths")
    w = np.asarray(target_masses)
    H = b.T @ (w[:, None] * a)
    if feature_coeffs is not None and lambda_feat > 0:
        fa, fb = feature_coeffs
        if fa.shape != fb.shape or fa.shape[0] != H.shape[0]:
            raise DimensionMismatch("feature coefficient shapes do not match")
        H = H + lambda_feat * (fb @ fa.T)
    return procrustes(H)


def procrustes(H):
    """Orthogonal matrix maximising ``<C, H>``."""
    U, s, Vt = np.linalg.svd(H)
    if s[-1] <= 1e-12 * max(s[0], 1e-300):
        logger.debug("functional map problem is rank deficient (sigma_min/sigma_max = %.2e)",
                       s[-1] / max(s[0], 1e-300))
    return FunctionalMap(U @ Vt, True, s)


# ------------------------------------------------------------------ ARAP

class ArapProblem:
    """Directed one-ring edges with clamped cotangent weights.

    Each undirected edge appears in both directions, matching a double sum
    over vertices and their neighbours.
    """

    def __init__(self, mesh):
        e = edges_of(np.asarray(mesh.triangles))
        w = -np.asarray(mesh.stiffness[e[:, 0], e[:, 1]]).ravel()
        w = np.maximum(w, 0.0)
        self.n = mesh.n_vertices
        self.head = np.concatenate([e[:, 0], e[:, 1]])
        self.tail = np.concatenate([e[:, 1], e[:, 0]])
        self.weights = np.concatenate([w, w])
        m = len(self.head)
        rows = np.concatenate([np.arange(m), np.arange(m)])
        cols = np.concatenate([self.head, self.tail])
        vals = np.concatenate([np.ones(m), -np.ones(m)])
        self.incidence = sparse.csr_matrix((vals, (rows, cols)), shape=(m, self.n))
        self.laplacian = (self.incidence.T @ sparse.diags(self.weights) @ self.incidence).tocsr()

    def edge_vectors(self, coords):
        coords = np.asarray(coords)
        return coords[self.head] - coords[self.tail]

    def energy(self, rest, deformed, rotations):
        e = self.edge_vectors(rest)
        d = self.edge_vectors(deformed)
        r = np.einsum("eij,ej->ei", rotations[self.head], e) - d
        return float((self.weights * (r * r).sum(axis=1)).sum())

    def fit_rotations(self, rest, deformed):
        """Per-vertex best rotation of rest one-ring edges onto deformed ones."""
        e = self.edge_vectors(rest)
        d = self.edge_vectors(deformed)
        outer = self.weights[:, None, None] * e[:, :, None] * d[:, None, :]
        S = np.zeros((self.n, 3, 3))
        np.add.at(S, self.head, outer)
        U, _, Vt = np.linalg.svd(S)
        V = np.transpose(Vt, (0, 2, 1))
        Ut = np.transpose(U, (0, 2, 1))
        R = V @ Ut
        flip = np.linalg.det(R) < 0
        if flip.any():
            V[flip, :, 2] *= -1
            R[flip] = V[flip] @ Ut[flip]
        return R


def arap_energy(mesh, deformed_coords, rotations, rest=None, problem=None):
    """Clamped-cotangent ARAP energy of ``deformed_coords`` w.r.t. ``rest``."""
    problem = problem or ArapProblem(mesh)
    rest = mesh.vertices if rest is None else rest
    return problem.energy(rest, deformed_coords, np.asarray(rotations))


def best_rotations(mesh, deformed_coords, rest=None, problem=None):
    problem = problem or ArapProblem(mesh)
    rest = mesh.vertices if rest is None else rest
    return problem.fit_rotations(rest, deformed_coords)


@dataclass
class DisplacementProblem:
    """Quadratic model of the displacement subproblem at one level.

    ``E(tau, R) = w_xyz^2 sum_m m_m |X_K[p(m)] + Phi[p(m)] tau - Y_K[m]|^2
    + lambda_arap * ARAP(X_K + Phi tau; R)`` with the ARAP term taken on the
    smoothed rest shape ``X_K``.
    """

    phi: np.ndarray
    rest: np.ndarray
    target: np.ndarray
    target_masses: np.ndarray
    assignments: np.ndarray
    lambda_arap: float
    arap: ArapProblem | None = None
    xyz_weight: float = 1.0
    arap_gram: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def _data(self):
        if "data" not in self._cache:
            p = self.assignments
            phi_p = self.phi[p]
            w = self.xyz_weight**2 * self.target_masses
            resid0 = self.target - self.rest[p]
            self._cache["data"] = (phi_p.T @ (w[:, None] * phi_p), phi_p.T @ (w[:, None] * resid0))
        return self._cache["data"]

    def _arap_gram(self):
        if self.arap_gram is None:
            self.arap_gram = self.phi.T @ (self.arap.laplacian @ self.phi)
        return self.arap_gram

    def deformed(self, tau):
        return self.rest + self.phi @ tau

    def data_energy(self, tau):
        r = self.rest[self.assignments] + self.phi[self.assignments] @ tau - self.target
        return float(self.xyz_weight**2 * (self.target_masses * (r * r).sum(axis=1)).sum())

    def arap_energy(self, tau, rotations):
        if self.lambda_arap == 0 or rotations is None:
            return 0.0
        return self.arap.energy(self.rest, self.deformed(tau), rotations)

    def energy(self, tau, rotations):
        return self.data_energy(tau) + self.lambda_arap * self.arap_energy(tau, rotations)

    def normal_equations(self, rotations):
        A, b = self._data()
        A, b = A.copy(), b.copy()
        if self.lambda_arap > 0:
            e = self.arap.edge_vectors(self.rest)
            rhs_edges = np.einsum("eij,ej->ei", rotations[self.arap.head], e) - e
            g = self.arap.incidence.T @ (self.arap.weights[:, None] * rhs_edges)
            A += self.lambda_arap * self._arap_gram()
            b += self.lambda_arap * (self.phi.T @ g)
        return A, b

    def gradient(self, tau, rotations):
        A, b = self.normal_equations(rotations)
        return 2.0 * (A @ tau - b)

    def solve(self, rotations):
        A, b = self.normal_equations(rotations)
        A = (A + A.T) / 2
        try:
            cf = scipy.linalg.cho_factor(A)
            return scipy.linalg.cho_solve(cf, b)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(A, b, rcond=None)[0]


def solve_displacement(problem, tau_init, max_inner=10, rel_tol=1e-5):
    """Local-global minimisation of the displacement subproblem.

    Alternates the exact linear solve for ``tau`` (rotations fixed) with
    per-vertex rotation fits (``tau`` fixed); both steps are exact block
    minimisers, so the recorded energies are non-increasing.
    """
    tau = np.asarray(tau_init, dtype=float)
    if tau.shape != (problem.phi.shape[1], 3):
        raise DimensionMismatch(f"tau_init has shape {tau.shape}, expected {(problem.phi.shape[1], 3)}")
    if problem.xyz_weight == 0:
        return Displacement(tau, None, ())
    if problem.lambda_arap == 0:
        tau = problem.solve(None)
        e = problem.energy(tau, None)
        if not np.isfinite(e):
            raise SolverFailure("non-finite displacement energy")
        return Displacement(tau, None, (e,))

    rotations = problem.arap.fit_rotations(problem.rest, problem.deformed(tau))
    energies = [problem.energy(tau, rotations)]
    for _ in range(max_inner):
        tau = problem.solve(rotations)
        energies.append(problem.energy(tau, rotations))
        rotations = problem.arap.fit_rotations(problem.rest, problem.deformed(tau))
        energies.append(problem.energy(tau, rotations))
        if not np.isfinite(energies[-1]):
            raise SolverFailure("non-finite displacement energy")
        prev = energies[-3]
        if prev - energies[-1] <= rel_tol * max(abs(prev), 1e-300):
            break
    return Displacement(tau, rotations, tuple(energies))


# ----------------------------------------------------------- total energy

@dataclass(frozen=True)
class EnergyTerms:
    alignment: float
    feat: float
    arap: float
    lambda_feat: float
    lambda_arap: float

    @property
    def total(self):
        return self.alignment + self.lambda_feat * self.feat + self.lambda_arap * self.arap


def total_energy(point_map, source_emb, target_emb, target_masses, C=None, feature_coeffs=None,
                 arap_value=0.0, lambda_feat=0.0, lambda_arap=0.0):
    """Alignment term plus weighted feature and ARAP regularisers."""
    align = alignment_term(point_map, source_emb, target_emb, target_masses)
    feat = feature_energy(C, feature_coeffs) if C is not None else 0.0
    return EnergyTerms(align, feat, float(arap_value), float(lambda_feat), float(lambda_arap))
