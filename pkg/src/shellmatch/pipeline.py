"""Coarse-to-fine matching over a logarithmic schedule of smooth-shell levels."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import alignment as al
from .config import RunConfig
from .descriptors import compute_hks, hks_times
from .embedding import (ChannelWeights, damping_factors, embed_source_morphed, embed_target,
                        smoothed_coordinates, spectral_count)
from .errors import InvalidRange, NonFiniteEnergy, TemplateMismatch
from .mesh import PointMap
from .spectral import ShellLevel, cached_basis, required_basis_size

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Schedule:
    levels: tuple
    num_iterations: int = 1

    def __len__(self):
        return len(self.levels)


def make_schedule(k_init=6, k_max=500, steps=50):
    """Levels ``K_i = k_init (k_max / k_init)^(i / (steps - 1))``."""
    if not (2 <= k_init < k_max) or steps < 2:
        raise InvalidRange(f"need 2 <= k_init < k_max and steps >= 2 (got {k_init}, {k_max}, {steps})")
    i = np.arange(steps)
    levels = k_init * (k_max / k_init) ** (i / (steps - 1))
    levels[0], levels[-1] = k_init, k_max
    return Schedule(tuple(float(x) for x in levels))


@dataclass(frozen=True, eq=False)
class MatchResult:
    point_map: PointMap
    reverse_map: PointMap
    deformed_source: np.ndarray
    functional_map: np.ndarray
    tau: np.ndarray
    energy_trace: list
    config: dict
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_source(self):
        return len(self.reverse_map)

    @property
    def n_target(self):
        return len(self.point_map)


class PairContext:
    """Per-pair quantities reused across levels (and across surrogate runs)."""

    def __init__(self, source, target, config, source_basis=None, target_basis=None,
                 cache_levels=False):
        self.source, self.target, self.config = source, target, config
        self.cache_levels = cache_levels
        sigma = config.sigma
        want = required_basis_size(config.k_max, sigma)
        cap = min(source.n_vertices, target.n_vertices) - 1
        k_total = min(want, cap)
        if k_total < want:
            logger.warning("basis capped at %d eigenpairs (wanted %d) by mesh size", k_total, want)
        self.k_max = min(config.k_max, k_total)
        if self.k_max <= config.k_init:
            raise InvalidRange(f"meshes too small for k_init={config.k_init}")
        kw = dict(dense_max=config.dense_max, seed=config.seed)
        self.source_basis = _fit_basis(source_basis, source, k_total, config, kw)
        self.target_basis = _fit_basis(target_basis, target, k_total, config, kw)
        self.k_total = k_total
        self.source_coeffs = self.source_basis.coefficients(source.vertices)
        self.target_coeffs = self.target_basis.coefficients(target.vertices)
        self.arap = al.ArapProblem(source) if config.lambda_arap > 0 else None
        self._arap_gram = None
        self._levels = {}
        self.source_hks = self.target_hks = None
        if config.lambda_feat > 0:
            times = hks_times(self.source_basis.eigenvalues, config.hks_times)
            self.source_hks = compute_hks(self.source_basis, times=times).values
            self.target_hks = compute_hks(self.target_basis, times=times).values

    def arap_gram(self, k):
        if self._arap_gram is None:
            phi = self.source_basis.eigenvectors
            self._arap_gram = phi.T @ (self.arap.laplacian @ phi)
        return self._arap_gram[:k, :k]

    def level_state(self, K):
        # states depend only on K, so surrogate runs sharing a context reuse them
        if not self.cache_levels:
            return LevelState(self, K)
        state = self._levels.get(K)
        if state is None:
            state = self._levels[K] = LevelState(self, K)
        return state

    def weights(self):
        c = self.config
        return ChannelWeights(c.w_spec, c.w_xyz, c.w_normal, c.spectral_damping)

    def feature_coeffs(self, k):
        if self.source_hks is None:
            return None
        return (self.source_basis.coefficients(self.source_hks, k),
                self.target_basis.coefficients(self.target_hks, k))


def _fit_basis(basis, mesh, k_total, config, kw):
    if basis is not None and basis.size >= k_total:
        return basis
    return cached_basis(mesh, k_total, cache_dir=config.cache_dir or None, **kw)


def _pad_map(C, k):
    out = np.eye(k)
    n = min(k, C.shape[0])
    out[:n, :n] = C[:n, :n]
    return out


def _pad_tau(tau, k):
    out = np.zeros((k, 3))
    n = min(k, tau.shape[0])
    out[:n] = tau[:n]
    return out


class LevelState:
    """Everything needed to embed both shapes at one level."""

    def __init__(self, ctx, K):
        self.ctx = ctx
        self.level = ShellLevel(K, ctx.config.sigma)
        self.k = spectral_count(self.level, ctx.k_total)
        mode = ctx.config.smoothing
        self.source_shell = smoothed_coordinates(ctx.source_basis, None, self.level, mode,
                                                 ctx.source_coeffs)
        self.target_shell = smoothed_coordinates(ctx.target_basis, None, self.level, mode,
                                                 ctx.target_coeffs)
        self.weights = ctx.weights()
        self.target_emb = embed_target(ctx.target, ctx.target_basis, self.level, self.weights,
                                       mode, smoothed=self.target_shell)
        w = self.weights
        self.source_spec = w.spectral * ctx.source_basis.eigenvectors[:, :self.k] * \
            damping_factors(ctx.source_basis.eigenvalues, self.k, w.damping)
        self.target_spec = self.target_emb.spectral_block

    def source_emb(self, C, tau, weights=None):
        return embed_source_morphed(self.ctx.source, self.ctx.source_basis, self.level, C, tau,
                                    weights or self.weights, self.ctx.config.smoothing,
                                    smoothed=self.source_shell)

    def displacement_problem(self, point_map, lambda_arap):
        ctx = self.ctx
        return al.DisplacementProblem(
            phi=ctx.source_basis.eigenvectors[:, :self.k],
            rest=self.source_shell,
            target=self.target_shell,
            target_masses=np.asarray(ctx.target.vertex_masses),
            assignments=point_map.assignments,
            lambda_arap=lambda_arap,
            arap=ctx.arap,
            xyz_weight=self.weights.xyz,
            arap_gram=ctx.arap_gram(self.k) if lambda_arap > 0 else None,
        )


def initial_functional_map(state, tau, workers=1):
    """Functional map from an extrinsic-only nearest-neighbour assignment."""
    k = state.k
    if state.weights.spectral == 0:
        return np.eye(k)
    w = state.weights
    extrinsic = ChannelWeights(0.0, w.xyz, w.normal, w.damping)
    if w.xyz == 0 and w.normal == 0:
        return np.eye(k)
    src = state.source_emb(np.eye(k), tau, extrinsic)
    tgt = np.hstack([np.zeros_like(state.target_spec), state.target_emb.coord_block,
                     state.target_emb.normal_block])
    p0 = PointMap(al.nearest_rows(src.matrix(), tgt, workers), codomain_size=len(src.coord_block))
    return al.solve_functional_map(state.source_spec, state.target_spec,
                                   state.ctx.target.vertex_masses, p0).C


def hierarchical_match(source, target, init=None, config=None, source_basis=None,
                       target_basis=None, context=None, C_init=None, check_monotone=True):
    """Align ``source`` to ``target`` level by level.

    Each level embeds both shells, then solves for the point map, the
    functional map and the displacement in turn, warm-starting from the
    previous level. ``init`` is the starting displacement at ``k_init``.
    """
    config = config or RunConfig()
    ctx = context or PairContext(source, target, config, source_basis, target_basis)
    schedule = make_schedule(config.k_init, ctx.k_max, config.steps)
    workers = config.threads
    lf = config.lambda_feat
    la = config.lambda_arap
    masses_t = np.asarray(target.vertex_masses)

    tau = np.zeros((config.k_init, 3)) if init is None else np.asarray(getattr(init, "tau", init))
    C = None if C_init is None else np.asarray(C_init)
    trace = []
    violations = 0
    point_map = None
    rotations = None

    for li, K in enumerate(schedule.levels):
        state = ctx.level_state(K)
        k = state.k
        tau = _pad_tau(tau, k)
        feats = ctx.feature_coeffs(k) if (lf > 0 and (config.feature_every_level or li == 0)) else None
        lam_f = lf if feats is not None else 0.0
        if C is None:
            C = initial_functional_map(state, tau, workers)
        else:
            C = _pad_map(C, k)
        n_iter = config.first_level_iterations if li == 0 else config.inner_iterations
        for _ in range(n_iter):
            src_emb = state.source_emb(C, tau)
            point_map = al.solve_point_map(src_emb, state.target_emb, workers)
            e_p = al.total_energy(point_map, src_emb, state.target_emb, masses_t, C, feats,
                                  0.0, lam_f, 0.0).total
            if state.weights.spectral > 0:
                C = al.solve_functional_map(state.source_spec, state.target_spec, masses_t,
                                            point_map, feats, lam_f).C
                src_emb = state.source_emb(C, tau)
            e_c = al.total_energy(point_map, src_emb, state.target_emb, masses_t, C, feats,
                                  0.0, lam_f, 0.0).total
            if check_monotone and e_c > e_p + 1e-9 * max(1.0, abs(e_p)):
                violations += 1
                logger.debug("functional-map step increased energy %.3e -> %.3e", e_p, e_c)
            problem = state.displacement_problem(point_map, la)
            disp = al.solve_displacement(problem, tau, config.arap_max_inner, config.arap_tol)
            tau, rotations = disp.tau, disp.rotations

        src_emb = state.source_emb(C, tau)
        arap_value = problem.arap_energy(tau, rotations) if la > 0 else 0.0
        terms = al.total_energy(point_map, src_emb, state.target_emb, masses_t, C, feats,
                                arap_value, lam_f, la)
        if not math.isfinite(terms.total):
            raise NonFiniteEnergy(f"non-finite energy at level {li} (K={K:.2f})")
        trace.append({"level": li, "K": K, "k": k, "alignment": terms.alignment,
                      "feat": terms.feat, "arap": terms.arap, "total": terms.total})

    # final correspondences in both directions on the last embeddings
    src_emb = state.source_emb(C, tau)
    fwd = al.solve_point_map(src_emb, state.target_emb, workers)
    rev = PointMap(al.nearest_rows(state.target_emb.matrix(), src_emb.matrix(), workers),
                   "source_to_target", target.n_vertices)
    final_align = al.alignment_term(fwd, src_emb, state.target_emb, masses_t)
    deformed = np.asarray(source.vertices) + ctx.source_basis.eigenvectors[:, :state.k] @ tau
    if not np.all(np.isfinite(deformed)):
        raise NonFiniteEnergy("deformed geometry is not finite")
    return MatchResult(
        point_map=fwd,
        reverse_map=rev,
        deformed_source=deformed,
        functional_map=C,
        tau=tau,
        energy_trace=trace,
        config=config.as_dict(),
        diagnostics={
            "final_alignment": final_align,
            "monotonicity_violations": violations,
            "k_max": ctx.k_max,
            "basis_size": ctx.k_total,
            "shell_source": state.source_shell + ctx.source_basis.eigenvectors[:, :state.k] @ tau,
        },
    )


def chain_via_template(match_a_to_t, match_b_to_t):
    """Compose A -> T -> B from two matches that share the template T."""
    if match_a_to_t.n_target != match_b_to_t.n_target:
        raise TemplateMismatch(
            f"template sizes differ: {match_a_to_t.n_target} vs {match_b_to_t.n_target}"
        )
    a_to_t = match_a_to_t.reverse_map.assignments
    t_to_b = match_b_to_t.point_map.assignments
    return PointMap(t_to_b[a_to_t], "source_to_target", match_b_to_t.n_source)
