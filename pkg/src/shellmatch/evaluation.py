"""Correspondence quality metrics and the ablation harness."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .config import RunConfig
from .errors import DimensionMismatch, InputError
from .mesh import PointMap, edge_graph

logger = logging.getLogger(__name__)


# ------------------------------------------------------------ geodesic error

def geodesic_error(pred, gt, target_mesh):
    """Per-vertex ``d_geo(pred, gt) / sqrt(area)`` on the target (edge-graph Dijkstra).

    Pairs in different connected components get ``inf``.
    """
    p = np.asarray(getattr(pred, "assignments", pred))
    g = np.asarray(getattr(gt, "assignments", gt))
    if p.shape != g.shape:
        raise DimensionMismatch(f"prediction has {len(p)} entries, ground truth {len(g)}")
    n = target_mesh.n_vertices
    if len(p) and (min(p.min(), g.min()) < 0 or max(p.max(), g.max()) >= n):
        raise DimensionMismatch("map refers to vertices outside the target mesh")
    errors = np.zeros(len(p))
    differ = p != g
    if differ.any():
        sources, inverse = np.unique(g[differ], return_inverse=True)
        dist = dijkstra(edge_graph(target_mesh), indices=sources)
        errors[differ] = dist[inverse, p[differ]]
    errors /= math.sqrt(target_mesh.area)
    if not np.all(np.isfinite(errors)):
        logger.warning("%d correspondences land in another connected component",
                       int((~np.isfinite(errors)).sum()))
    return errors


def mean_error(errors):
    """Mean over finite entries; infinite ones are reported and skipped."""
    errors = np.asarray(errors, dtype=float)
    finite = np.isfinite(errors)
    if not finite.all():
        logger.warning("excluding %d infinite errors from the mean", int((~finite).sum()))
    if not finite.any():
        return math.inf
    return float(errors[finite].mean())


@dataclass(frozen=True, eq=False)
class ErrorCurve:
    thresholds: np.ndarray
    fractions: np.ndarray

    def __post_init__(self):
        if len(self.thresholds) != len(self.fractions):
            raise ValueError("thresholds and fractions differ in length")


def error_curve(errors, thresholds=101):
    """Fraction of correspondences with error ``<= t`` for each threshold.

    An integer ``thresholds`` spaces that many thresholds evenly over
    ``[0, max error]``.
    """
    errors = np.asarray(errors, dtype=float)
    errors = errors[np.isfinite(errors)]
    if np.isscalar(thresholds) or np.ndim(thresholds) == 0:
        top = errors.max() if errors.size else 0.0
        thresholds = np.linspace(0.0, top, int(thresholds))
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be ascending")
    if errors.size == 0:
        return ErrorCurve(thresholds, np.ones_like(thresholds))
    ordered = np.sort(errors)
    fractions = np.searchsorted(ordered, thresholds, side="right") / errors.size
    return ErrorCurve(thresholds, fractions)


# ------------------------------------------------------- conformal distortion

@dataclass(frozen=True, eq=False)
class DistortionReport:
    values: np.ndarray
    mean: float
    histogram: np.ndarray
    bin_edges: np.ndarray
    n_degenerate: int
    cap: float


def triangle_distortion(rest, image, triangles):
    """``s1/s2 + s2/s1 - 2`` of each triangle's linear map; ``inf`` if the image collapses.

    Uses the two first fundamental forms: ``s1^2, s2^2`` are the eigenvalues
    of ``G_rest^-1 G_image`` so the score is ``tr / sqrt(det) - 2``.
    """
    rest = np.asarray(rest, dtype=float)
    image = np.asarray(image, dtype=float)
    t = np.asarray(triangles)

    def forms(p):
        e1 = p[t[:, 1]] - p[t[:, 0]]
        e2 = p[t[:, 2]] - p[t[:, 0]]
        a = (e1 * e1).sum(1)
        b = (e1 * e2).sum(1)
        c = (e2 * e2).sum(1)
        return a, b, c, np.maximum(a * c - b * b, 0.0)

    a0, b0, c0, d0 = forms(rest)
    a1, b1, c1, d1 = forms(image)
    with np.errstate(divide="ignore", invalid="ignore"):
        # trace of adj(G0) G1 divided by det(G0)
        tr = (c0 * a1 - 2 * b0 * b1 + a0 * c1) / d0
        det = d1 / d0
        out = tr / np.sqrt(det) - 2.0
    scale = np.maximum(a1 + c1, 1e-300)
    bad = ~(d1 > 1e-24 * scale * scale) | ~np.isfinite(out)
    out = np.maximum(out, 0.0)
    out[bad] = math.inf
    return out


def conformal_distortion(source_mesh, coords, cap=10.0, bins=50):
    """Distortion of every source triangle under ``vertices -> coords``."""
    coords = np.asarray(coords, dtype=float)
    if coords.shape != np.asarray(source_mesh.vertices).shape:
        raise DimensionMismatch(
            f"coordinates have shape {coords.shape}, mesh has {source_mesh.n_vertices} vertices"
        )
    values = triangle_distortion(source_mesh.vertices, coords, source_mesh.triangles)
    capped = np.minimum(values, cap)
    hist, edges = np.histogram(capped, bins=bins, range=(0.0, cap))
    return DistortionReport(values, float(capped.mean()), hist, edges,
                            int(np.isinf(values).sum()), cap)


# ---------------------------------------------------------------- ablations

SWITCHES = {
    "full": {},
    "lambda_feat0": {"lambda_feat": 0.0},
    "lambda_arap0": {"lambda_arap": 0.0},
    "extr_only": {"w_spec": 0.0},
    "intr_only": {"w_xyz": 0.0, "w_normal": 0.0},
    "no_normals": {"w_normal": 0.0},
    "no_mcmc": {"mcmc": False, "rigid": "none"},
    "random_rigid": {"rigid": "random"},
    "spectral_rec": {"smoothing": "spectral"},
}


def switch_config(config, name):
    if name not in SWITCHES:
        raise InputError(f"unknown ablation switch {name!r}; choose from {sorted(SWITCHES)}")
    return config.replace(**SWITCHES[name])


@dataclass(frozen=True, eq=False)
class AblationPair:
    source: object
    target: object
    gt: PointMap          # source vertex -> target vertex
    name: str = ""


@dataclass(eq=False)
class AblationRow:
    switch: str
    pair_errors: list
    pair_distortions: list
    failures: list = field(default_factory=list)

    @property
    def avg_error(self):
        return float(np.mean(self.pair_errors))

    @property
    def failure_rate(self):
        return float(np.mean(self.failures)) if self.failures else 0.0

    @property
    def avg_distortion(self):
        return float(np.mean(self.pair_distortions))


def evaluate_match(pair, outcome):
    err = geodesic_error(outcome.reverse_map, pair.gt, pair.target)
    rest = pair.source if outcome.source_aligned is None else outcome.source_aligned
    dist = conformal_distortion(rest, outcome.result.deformed_source)
    return mean_error(err), dist.mean


def run_ablation(pairs, config=None, switches=None, matcher=None):
    """One match per pair and switch; ``full`` always runs first as the reference.

    A pair fails under a switch when its mean error exceeds twice the full
    method's on that pair.
    """
    from .run import match_shapes

    config = config or RunConfig()
    matcher = matcher or match_shapes
    names = ["full"] + [s for s in (switches or list(SWITCHES)) if s != "full"]
    for s in names:
        switch_config(config, s)
    bases = {}
    rows = []
    for s in names:
        cfg = switch_config(config, s)
        row = AblationRow(s, [], [])
        for i, pair in enumerate(pairs):
            sb, tb = bases.get(i, (None, None))
            out = matcher(pair.source, pair.target, cfg, source_basis=sb, target_basis=tb)
            # eigenbases depend only on the meshes, sigma and k_max: reuse across switches
            bases.setdefault(i, (out.source_basis, out.target_basis))
            e, d = evaluate_match(pair, out)
            row.pair_errors.append(e)
            row.pair_distortions.append(d)
            logger.info("ablation %s pair %s: error %.4g distortion %.4g", s, pair.name or i, e, d)
        rows.append(row)
    full = rows[0].pair_errors
    for row in rows:
        row.failures = [e > 2.0 * f for e, f in zip(row.pair_errors, full)]
    return rows


# -------------------------------------------------------------------- CSV

def write_error_curve_csv(path, curves):
    """Long format ``label, threshold, fraction``; ``curves`` maps label -> ErrorCurve."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "threshold", "fraction"])
        for label, c in curves.items():
            for t, f in zip(c.thresholds, c.fractions):
                w.writerow([label, f"{t:.9g}", f"{f:.9g}"])


def write_distortion_csv(path, reports):
    """Long format ``label, bin_lo, bin_hi, count``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "bin_lo", "bin_hi", "count"])
        for label, r in reports.items():
            for lo, hi, c in zip(r.bin_edges[:-1], r.bin_edges[1:], r.histogram):
                w.writerow([label, f"{lo:.9g}", f"{hi:.9g}", int(c)])


def write_ablation_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["switch", "avg_error", "failure_rate", "avg_distortion"])
        for r in rows:
            w.writerow([r.switch, f"{r.avg_error:.9g}", f"{r.failure_rate:.9g}",
                        f"{r.avg_distortion:.9g}"])
