"""Surrogate-based initialization: rigid pose search and MCMC over coarse displacements."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .config import RunConfig
from .decimate import decimate
from .errors import AllSurrogatesFailed, ShellMatchError
from .pipeline import PairContext, hierarchical_match, make_schedule
from .shapes import octahedral_rotations
from .spectral import cached_basis, required_basis_size

logger = logging.getLogger(__name__)

# independent random streams split off the root seed
STREAM_RIGID, STREAM_PROPOSALS, STREAM_ACCEPT = 0, 1, 2


def rng_for(seed, stream):
    """Generator for one consumer of the root seed."""
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[stream])


@dataclass(frozen=True)
class SurrogateConfig:
    """Settings of the low-cost surrogate runs (regularizers are always off)."""

    k_max: int = 20
    vertices: int = 1000
    n_proposals: int = 100
    sigma_match_sq: float = 1e-3
    steps: int = 10
    proposal_scale: float = 1.0
    include_initial: bool = True
    lambda_feat: float = field(default=0.0, init=False)
    lambda_arap: float = field(default=0.0, init=False)

    def __post_init__(self):
        if min(self.k_max, self.vertices, self.n_proposals, self.steps) <= 0:
            raise ValueError("surrogate settings must be positive")
        if self.sigma_match_sq <= 0 or self.proposal_scale <= 0:
            raise ValueError("surrogate settings must be positive")

    @classmethod
    def from_run_config(cls, cfg):
        return cls(k_max=cfg.surrogate_k_max, vertices=cfg.surrogate_vertices,
                   n_proposals=cfg.n_proposals, sigma_match_sq=cfg.sigma_match_sq,
                   steps=cfg.surrogate_steps, proposal_scale=cfg.proposal_scale,
                   include_initial=cfg.include_initial)

    def run_config(self, base):
        return base.replace(k_max=self.k_max, steps=self.steps, lambda_feat=0.0,
                            lambda_arap=0.0, mcmc=False, threads=1)


@dataclass(frozen=True, eq=False)
class ProposalRecord:
    index: int
    tau: np.ndarray
    energy: float
    accepted: bool
    seed: int
    seconds: float = 0.0
    initial: bool = False


@dataclass(frozen=True, eq=False)
class SurrogateOutcome:
    energy: float
    tau: np.ndarray | None
    seconds: float
    error: str = ""


class Surrogate:
    """Decimated pair plus shared bases; evaluates displacement proposals.

    ``run`` is a pure function of ``tau`` so proposals may be evaluated in
    any order or concurrently.
    """

    def __init__(self, source, target, config=None, *, source_dec=None, target_dec=None,
                 source_basis=None, target_basis=None, rotation=None, full_basis=None):
        config = config or RunConfig()
        self.config = config
        self.settings = SurrogateConfig.from_run_config(config)
        self.run_cfg = self.settings.run_config(config)
        self.source_full, self.target_full = source, target
        self.source_dec = source_dec or decimate(source, self.settings.vertices)
        self.target_dec = target_dec or decimate(target, self.settings.vertices)
        self.full_basis = full_basis
        self.rotation = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
        src = self.source_dec.mesh
        if rotation is not None:
            src = src.transformed(self.rotation)
        tgt = self.target_dec.mesh
        # intrinsic bases do not change under rotation, so they are shared
        k_total = min(required_basis_size(self.run_cfg.k_max, self.run_cfg.sigma),
                      min(src.n_vertices, tgt.n_vertices) - 1)
        kw = dict(dense_max=config.dense_max, seed=config.seed)
        cache = config.cache_dir or None
        self.source_basis = source_basis or cached_basis(self.source_dec.mesh, k_total, cache, **kw)
        self.target_basis = target_basis or cached_basis(tgt, k_total, cache, **kw)
        self.context = PairContext(src, tgt, self.run_cfg, self.source_basis, self.target_basis,
                                   cache_levels=True)
        # build every level once before runs share the context
        for K in make_schedule(self.run_cfg.k_init, self.context.k_max, self.run_cfg.steps).levels:
            self.context.level_state(K)

    def rotated(self, rotation):
        """Same decimated pair with the source rotated about its centroid."""
        return Surrogate(self.source_full, self.target_full, self.config,
                         source_dec=self.source_dec, target_dec=self.target_dec,
                         source_basis=self.source_basis, target_basis=self.target_basis,
                         rotation=rotation, full_basis=self.full_basis)

    @property
    def k_init(self):
        return self.run_cfg.k_init

    def match(self, tau):
        ctx = self.context
        return hierarchical_match(ctx.source, ctx.target, init=tau, config=self.run_cfg,
                                  context=ctx, check_monotone=False)

    def run(self, tau):
        """Final pure alignment energy of a surrogate started at ``tau``; +inf on failure."""
        t0 = time.perf_counter()
        try:
            res = self.match(np.asarray(tau, dtype=float))
            energy = float(res.diagnostics["final_alignment"])
            if not math.isfinite(energy):
                raise ValueError("non-finite surrogate energy")
            return SurrogateOutcome(energy, res.tau, time.perf_counter() - t0)
        except (ShellMatchError, np.linalg.LinAlgError, ValueError) as exc:
            logger.debug("surrogate failed: %s", exc)
            return SurrogateOutcome(math.inf, None, time.perf_counter() - t0, str(exc))

    def transfer(self, tau_dec, k=None):
        """Carry a decimated-mesh displacement over to the full source basis.

        The displacement field ``Phi_dec tau`` is moved into the full mesh's
        normalized frame, spread to all input vertices through the collapse
        assignment and projected onto the first ``k`` full eigenfunctions.
        """
        k = k or self.k_init
        tau_dec = np.asarray(tau_dec, dtype=float)
        phi_dec = self.source_basis.eigenvectors[:, :tau_dec.shape[0]]
        disp = (phi_dec @ tau_dec) / self.source_dec.mesh.scale
        disp = disp[self.source_dec.assignment]
        if self.full_basis is None or self.full_basis.size < k:
            self.full_basis = cached_basis(self.source_full, k, self.config.cache_dir or None,
                                           dense_max=self.config.dense_max, seed=self.config.seed)
        return self.full_basis.coefficients(disp, k)


def evaluate_proposals(surrogate, taus, workers=1):
    """Energies of all proposals; identical whatever ``workers`` is."""
    if workers <= 1:
        return [surrogate.run(t) for t in taus]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(surrogate.run, taus))


def metropolis_accept(e_prop, e_best, u, sigma_match_sq):
    """Metropolis acceptance; always accepts when ``e_prop <= e_best``."""
    if not math.isfinite(e_prop):
        return False
    if e_prop <= e_best:
        return True
    alpha = math.exp(-(e_prop - e_best) / (2.0 * sigma_match_sq))
    return u <= alpha


@dataclass(frozen=True, eq=False)
class McmcResult:
    tau: np.ndarray
    surrogate_tau: np.ndarray
    best_index: int
    energy: float
    records: list
    chain: list

    def report_rows(self):
        return [(r.index, r.energy, int(r.accepted)) for r in self.records]


def mcmc_search(source, target, config=None, seed=None, surrogate=None):
    """Score prior-drawn proposals with surrogate runs and return the best one.

    All proposals are scored independently (in parallel when
    ``config.threads > 1``); the Metropolis accept/reject chain is then folded
    over the energies in proposal order. The returned displacement is the
    global argmin, moved to the full source basis at ``k_init``.
    """
    config = config or RunConfig()
    seed = config.seed if seed is None else seed
    sur = surrogate or Surrogate(source, target, config)
    s = SurrogateConfig.from_run_config(config)
    k0 = sur.k_init
    taus = s.proposal_scale * rng_for(seed, STREAM_PROPOSALS).standard_normal((s.n_proposals, k0, 3))
    taus = list(taus)
    initial = []
    if s.include_initial:
        initial = [np.zeros((k0, 3))]
    outcomes = evaluate_proposals(sur, initial + taus, config.threads)
    us = rng_for(seed, STREAM_ACCEPT).random(s.n_proposals)

    records, chain = [], []
    e_best = math.inf
    if s.include_initial:
        e_best = outcomes[0].energy
        records.append(ProposalRecord(0, initial[0], e_best, True, seed, outcomes[0].seconds, True))
        chain.append(0)
    off = len(initial)
    for i, (tau, out) in enumerate(zip(taus, outcomes[off:])):
        idx = i + off
        ok = metropolis_accept(out.energy, e_best, us[i], s.sigma_match_sq)
        if ok:
            e_best = out.energy
            chain.append(idx)
        records.append(ProposalRecord(idx, tau, out.energy, ok, seed, out.seconds))

    energies = np.array([r.energy for r in records])
    if not np.isfinite(energies).any():
        raise AllSurrogatesFailed(f"all {len(records)} surrogate runs failed")
    best = int(np.argmin(energies))
    best_tau = outcomes[best].tau
    tau_full = sur.transfer(best_tau, k0)
    logger.info("mcmc: best proposal %d, E=%.4g, %d accepted", best, energies[best], len(chain))
    return McmcResult(tau_full, records[best].tau, best, float(energies[best]), records, chain)


@dataclass(frozen=True, eq=False)
class RigidInit:
    rotation: np.ndarray
    translation: np.ndarray
    scores: np.ndarray
    candidates: np.ndarray
    index: int

    def apply(self, mesh):
        return mesh.transformed(self.rotation, self.translation)


def _centroid(mesh):
    m = np.asarray(mesh.vertex_masses)
    return (m[:, None] * np.asarray(mesh.vertices)).sum(axis=0) / m.sum()


def _centroid_translation(source, target, rotation):
    return _centroid(target) - rotation @ _centroid(source)


def rigid_candidates(extra_random=8, seed=0):
    octa = octahedral_rotations()
    if extra_random == 0:
        return octa
    rand = Rotation.random(extra_random, random_state=rng_for(seed, STREAM_RIGID)).as_matrix()
    return np.concatenate([octa, rand.reshape(-1, 3, 3)])


def rigid_init(source, target, config=None, seed=None, surrogate=None):
    """Pick the rotation whose tau = 0 surrogate run scores lowest.

    Identity is candidate 0 and wins ties. Centroids are always aligned.
    """
    config = config or RunConfig()
    seed = config.seed if seed is None else seed
    sur = surrogate or Surrogate(source, target, config)
    cands = rigid_candidates(config.extra_random, seed)
    zero = np.zeros((sur.k_init, 3))

    def score(R):
        return sur.rotated(R).run(zero).energy

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            scores = np.array(list(pool.map(score, cands)))
    else:
        scores = np.array([score(R) for R in cands])
    if not np.isfinite(scores).any():
        raise AllSurrogatesFailed("no rigid candidate produced a finite energy")
    best = int(np.argmin(scores))
    if scores[0] <= scores[best] + 1e-12 * max(1.0, abs(scores[best])):
        best = 0
    R = cands[best]
    return RigidInit(R, _centroid_translation(source, target, R), scores, cands, best)


def random_rigid(source, target, seed=0):
    """A uniformly random rotation (ablation stand-in for the pose search)."""
    R = Rotation.random(random_state=rng_for(seed, STREAM_RIGID)).as_matrix()
    return RigidInit(R, _centroid_translation(source, target, R), np.array([]), R[None], 0)


def identity_rigid(source, target):
    R = np.eye(3)
    return RigidInit(R, _centroid_translation(source, target, R), np.array([]), R[None], 0)
