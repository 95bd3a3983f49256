"""Command-line interface: ``shellmatch match|smooth|eval|ablate|init``."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import InputError, KTooLarge, ShellMatchError
from .meshio import load_mesh, read_correspondence, save_mesh, write_correspondence
from .mesh import PointMap

logger = logging.getLogger("shellmatch")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

TRACE_COLUMNS = ["level", "alignment", "E_feat", "E_arap", "total"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INPUT)


def _add_config_args(p, seed=True):
    p.add_argument("--config", help="INI config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config value (repeatable), e.g. --set lambda_arap=5")
    if seed:
        p.add_argument("--seed", type=int, help="root random seed")
    p.add_argument("--threads", type=int, help="worker threads")


def build_config(args):
    """Defaults, then ``--config``, then ``--set``, then explicit flags."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise InputError(f"no such file: {args.config}")
        cfg = RunConfig.load(args.config)
    changes = {}
    for item in getattr(args, "set", []) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--set expects KEY=VALUE, got {item!r}")
        changes[key.strip()] = value
    if changes:
        cfg = cfg.with_strings(changes)
    flags = {}
    if getattr(args, "seed", None) is not None:
        flags["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        flags["threads"] = args.threads
    if getattr(args, "no_mcmc", False):
        flags["mcmc"] = False
    return cfg.replace(**flags) if flags else cfg


def _out_dir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from None
    return out


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for t in trace:
            w.writerow([t["level"], f"{t['alignment']:.9g}", f"{t['feat']:.9g}",
                        f"{t['arap']:.9g}", f"{t['total']:.9g}"])


def write_mcmc_report(path, mres):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "energy", "accepted"])
        if mres is not None:
            for idx, e, acc in mres.report_rows():
                w.writerow([idx, f"{e:.9g}", acc])


def _to_raw(mesh, coords):
    return np.asarray(coords) / mesh.scale + mesh.offset


# ------------------------------------------------------------------ commands

def cmd_match(args):
    from .run import match_shapes

    cfg = build_config(args)
    source = load_mesh(args.source)
    target = load_mesh(args.target)
    out = _out_dir(args.out_dir)
    cfg.save(out / "config.ini")
    outcome = match_shapes(source, target, cfg)
    res = outcome.result
    write_correspondence(out / "target_to_source.txt", res.point_map, args.one_based)
    write_correspondence(out / "source_to_target.txt", res.reverse_map, args.one_based)
    ext = Path(args.source).suffix.lower()
    save_mesh(out / f"deformed{ext}", _to_raw(target, res.deformed_source), source.triangles)
    write_trace_csv(out / "energy_trace.csv", res.energy_trace)
    write_mcmc_report(args.mcmc_report or out / "mcmc_report.csv", outcome.mcmc)
    np.savetxt(out / "rigid.txt", np.vstack([outcome.rigid.rotation, outcome.rigid.translation]),
               fmt="%.12g")
    print(f"matched {source.n_vertices} -> {target.n_vertices} vertices; "
          f"final energy {res.energy_trace[-1]['total']:.6g}; wrote {out}")
    return EXIT_OK


def cmd_smooth(args):
    from .embedding import shell_weights
    from .spectral import ShellLevel, cached_basis, required_basis_size

    mesh = load_mesh(args.mesh)
    if args.K <= 0 or args.sigma <= 0:
        raise InputError("K and sigma must be positive")
    k_total = required_basis_size(np.ceil(args.K), args.sigma)
    cap = mesh.n_vertices - 1
    if args.K > cap:
        raise KTooLarge(f"K={args.K} exceeds the basis size available ({cap}) for this mesh")
    k_total = min(k_total, cap)
    basis = cached_basis(mesh, k_total)
    level = ShellLevel(args.K, args.sigma)
    w = shell_weights(level, basis.size, args.mode)
    smoothed = basis.eigenvectors @ (w[:, None] * basis.coefficients(mesh.vertices))
    save_mesh(args.out, _to_raw(mesh, smoothed), mesh.triangles)
    print(f"wrote {args.out} ({args.mode}, K={args.K:g}, sigma={args.sigma:g})")
    return EXIT_OK


def cmd_eval(args):
    from .evaluation import (conformal_distortion, error_curve, geodesic_error, mean_error,
                             write_distortion_csv, write_error_curve_csv)

    target = load_mesh(args.target_mesh)
    pred = read_correspondence(args.pred, args.one_based, codomain_size=target.n_vertices)
    if args.gt == "identity":
        gt = PointMap(np.arange(len(pred)), "source_to_target", target.n_vertices)
    else:
        gt = read_correspondence(args.gt, args.one_based, codomain_size=target.n_vertices)
    errors = geodesic_error(pred, gt, target)
    out = _out_dir(args.out_dir)
    np.savetxt(out / "errors.txt", errors, fmt="%.9g")
    curve = error_curve(errors, args.thresholds)
    write_error_curve_csv(out / "error_curve.csv", {"pred": curve})
    rows = [("mean_error", mean_error(errors)), ("n", len(errors))]
    if args.source_mesh and args.deformed:
        src = load_mesh(args.source_mesh, normalize=False)
        deformed = load_mesh(args.deformed, normalize=False)
        report = conformal_distortion(src, deformed.vertices)
        write_distortion_csv(out / "distortion.csv", {"pred": report})
        rows.append(("mean_distortion", report.mean))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        for k, v in rows:
            w.writerow([k, f"{v:.9g}" if isinstance(v, float) else v])
    RunConfig().save(out / "config.ini")
    print(f"mean geodesic error {rows[0][1]:.6g} over {len(errors)} vertices")
    return EXIT_OK


def read_manifest(path):
    """CSV with header ``source,target,gt``; paths are relative to the manifest."""
    from .evaluation import AblationPair

    if not os.path.exists(path):
        raise InputError(f"no such file: {path}")
    base = Path(path).parent
    pairs = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"source", "target", "gt"} <= set(reader.fieldnames):
            raise InputError(f"{path}: manifest needs columns source,target,gt")
        for row in reader:
            src = load_mesh(base / row["source"].strip())
            tgt = load_mesh(base / row["target"].strip())
            gt_field = row["gt"].strip()
            if gt_field == "identity":
                if src.n_vertices != tgt.n_vertices:
                    raise InputError("gt=identity needs meshes with equal vertex counts")
                gt = PointMap(np.arange(src.n_vertices), "source_to_target", tgt.n_vertices)
            else:
                gt = read_correspondence(base / gt_field, row.get("one_based", "0") == "1",
                                         codomain_size=tgt.n_vertices)
            pairs.append(AblationPair(src, tgt, gt, f"{row['source']}->{row['target']}"))
    if not pairs:
        raise InputError(f"{path}: manifest lists no pairs")
    return pairs


def cmd_ablate(args):
    from .evaluation import run_ablation, switch_config, write_ablation_csv

    cfg = build_config(args)
    switches = [s.strip() for s in args.switches.split(",") if s.strip()] if args.switches else None
    for s in switches or []:
        switch_config(cfg, s)
    pairs = read_manifest(args.manifest)
    out = _out_dir(args.out_dir)
    cfg.save(out / "config.ini")
    rows = run_ablation(pairs, cfg, switches)
    write_ablation_csv(out / "ablation.csv", rows)
    for r in rows:
        print(f"{r.switch:14s} error {r.avg_error:.5f}  failures {100 * r.failure_rate:5.1f}%  "
              f"distortion {r.avg_distortion:.4f}")
    return EXIT_OK


def cmd_init(args):
    from .run import initialize

    cfg = build_config(args)
    source = load_mesh(args.source)
    target = load_mesh(args.target)
    out = _out_dir(args.out_dir)
    cfg.save(out / "config.ini")
    rigid, mres, _ = initialize(source, target, cfg)
    np.savetxt(out / "rigid.txt", np.vstack([rigid.rotation, rigid.translation]), fmt="%.12g")
    if rigid.scores.size:
        np.savetxt(out / "rigid_scores.txt", rigid.scores, fmt="%.9g")
    write_mcmc_report(args.mcmc_report or out / "mcmc_report.csv", mres)
    if mres is not None:
        np.savetxt(out / "tau_init.txt", mres.tau, fmt="%.12g")
    print(f"rigid candidate {rigid.index}" +
          ("" if mres is None else f"; best proposal {mres.best_index}, E={mres.energy:.6g}"))
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser():
    p = _Parser(prog="shellmatch", description="Dense shape correspondence with smooth shells.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("match", help="match a source mesh to a target mesh")
    m.add_argument("source")
    m.add_argument("target")
    m.add_argument("out_dir")
    m.add_argument("--one-based", action="store_true", help="write 1-based indices")
    m.add_argument("--mcmc-report", help="path of the MCMC proposal CSV")
    m.add_argument("--no-mcmc", action="store_true", help="skip the MCMC initialization")
    _add_config_args(m)
    m.set_defaults(func=cmd_match)

    s = sub.add_parser("smooth", help="write a smooth shell or spectral reconstruction")
    s.add_argument("mesh")
    s.add_argument("K", type=float)
    s.add_argument("out")
    s.add_argument("--sigma", type=float, default=0.5)
    s.add_argument("--mode", choices=["shell", "spectral"], default="shell")
    s.set_defaults(func=cmd_smooth)

    e = sub.add_parser("eval", help="geodesic error, error curve and distortion")
    e.add_argument("pred", help="predicted source->target correspondence file")
    e.add_argument("gt", help="ground-truth correspondence file or 'identity'")
    e.add_argument("target_mesh")
    e.add_argument("out_dir")
    e.add_argument("--one-based", action="store_true")
    e.add_argument("--thresholds", type=int, default=101, help="number of curve thresholds")
    e.add_argument("--source-mesh", help="source mesh, for conformal distortion")
    e.add_argument("--deformed", help="deformed source mesh, for conformal distortion")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="run ablation switches over a pair manifest")
    a.add_argument("manifest", help="CSV with columns source,target,gt")
    a.add_argument("out_dir")
    a.add_argument("--switches", help="comma-separated switch names (default: all)")
    _add_config_args(a)
    a.set_defaults(func=cmd_ablate)

    i = sub.add_parser("init", help="run only rigid pose search and MCMC initialization")
    i.add_argument("source")
    i.add_argument("target")
    i.add_argument("out_dir")
    i.add_argument("--mcmc-report", help="path of the MCMC proposal CSV")
    _add_config_args(i)
    i.set_defaults(func=cmd_init)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ShellMatchError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
