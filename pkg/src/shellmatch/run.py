"""End-to-end matching: rigid pose search, MCMC initialization, hierarchical alignment."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .mcmc import Surrogate, identity_rigid, mcmc_search, random_rigid, rigid_init
from .pipeline import PairContext, hierarchical_match

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MatchOutcome:
    result: object
    rigid: object
    mcmc: object = None
    source_aligned: object = None
    source_basis: object = None
    target_basis: object = None

    @property
    def point_map(self):
        return self.result.point_map

    @property
    def reverse_map(self):
        return self.result.reverse_map


def initialize(source, target, config, surrogate=None, full_basis=None):
    """Rigid pose plus MCMC displacement, as used before the full pipeline.

    Returns ``(rigid, mcmc_result, surrogate)``; ``mcmc_result`` is ``None``
    when MCMC is switched off.
    """
    need_surrogate = config.rigid == "search" or config.mcmc
    sur = surrogate
    if sur is None and need_surrogate:
        sur = Surrogate(source, target, config, full_basis=full_basis)
    if config.rigid == "search":
        rigid = rigid_init(source, target, config, surrogate=sur)
    elif config.rigid == "random":
        rigid = random_rigid(source, target, config.seed)
    else:
        rigid = identity_rigid(source, target)
    mres = None
    if config.mcmc:
        moved = rigid.apply(source)
        mres = mcmc_search(moved, target, config, surrogate=sur.rotated(rigid.rotation))
    return rigid, mres, sur


def match_shapes(source, target, config=None, source_basis=None, target_basis=None):
    """Full matching of two meshes; both are expected to be unit-area normalized."""
    config = config or RunConfig()
    # a rigid motion leaves the intrinsic basis unchanged, so build it up front
    ctx0 = PairContext(source, target, config, source_basis, target_basis)
    rigid, mres, _ = initialize(source, target, config, full_basis=ctx0.source_basis)
    moved = rigid.apply(source)
    init = np.zeros((config.k_init, 3)) if mres is None else mres.tau
    result = hierarchical_match(moved, target, init=init, config=config,
                                source_basis=ctx0.source_basis, target_basis=ctx0.target_basis)
    return MatchOutcome(result, rigid, mres, moved, ctx0.source_basis, ctx0.target_basis)
