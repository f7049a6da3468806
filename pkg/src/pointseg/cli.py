"""Command-line front end: one subcommand per kernel.

Exit codes: 0 success, 1 data errors (unreadable or inconsistent files),
2 usage and configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import shlex
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional

import numpy as np

from . import affinity, coarse, curriculum, heatmap, io, metrics, postprocess
from .config import ConfigError, PipelineConfig, PointSegError
from .gradcheck import gradcheck_kernel


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (default: $BONUS_CONFIG)")
    g = p.add_argument_group("pipeline parameters (override the config file)")
    for f in dataclasses.fields(PipelineConfig):
        kind = {"int": int, "float": float}.get(str(f.type).replace("Optional[", "").rstrip("]"), float)
        g.add_argument(_flag(f.name), dest=f"cfg_{f.name}", type=kind, default=None, metavar=f.name.upper())


def _resolve_config(args) -> PipelineConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_")}
    return PipelineConfig.load(args.config, overrides)


def _dump(payload: dict, path: Optional[str]) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _report(args, cfg: PipelineConfig, result: dict) -> None:
    _dump({"command": args.command, "config": cfg.to_dict(), "result": result}, args.out)


def _shape(args):
    if args.like:
        return io.load_raster(args.like).shape[:2]
    if args.height is None or args.width is None:
        raise ConfigError("give --height and --width, or --like RASTER")
    return args.height, args.width


def cmd_heatmap(args, cfg):
    h, w = _shape(args)
    pts = io.read_points(args.points, h, w)
    io.write_raster(args.output, heatmap.gaussian_heatmap(pts, h, w, cfg.sigma, cfg.r1, cfg.r2))


def cmd_det_loss(args, cfg):
    res = heatmap.detection_loss(io.read_raster(args.pred), io.read_raster(args.target), cfg.w_fg, cfg.w_bg)
    if args.grad:
        io.write_raster(args.grad, res.grad)
    _report(args, cfg, {"loss": res.loss})


def cmd_peaks(args, cfg):
    peaks = heatmap.extract_peaks(io.read_raster(args.heatmap), cfg.peak_threshold, cfg.connectivity)
    io.write_points(args.output, peaks.points)


def cmd_curriculum(args, cfg):
    pred = io.read_raster(args.pred)
    h, w = pred.shape
    existing = io.read_points(args.existing, h, w)
    cands = curriculum.candidates_from_heatmap(pred, existing, cfg.peak_threshold, cfg.k_neighbors, cfg.connectivity)
    n_det = len(cands) if args.n_det is None else args.n_det
    n_gt = len(existing) if args.n_gt is None else args.n_gt
    admitted = curriculum.select_pseudo_labels(cands, existing, cfg.overlap_radius, n_det, n_gt)
    io.write_points(args.output, admitted)
    if args.out:
        _report(args, cfg, {"candidates": len(cands), "n_det": n_det, "n_gt": n_gt,
                            "admission_count": curriculum.admission_count(n_det, n_gt), "admitted": len(admitted)})


def cmd_voronoi(args, cfg):
    h, w = _shape(args)
    pts = io.read_points(args.points, h, w)
    io.write_raster(args.output, coarse.voronoi_labels(pts, h, w, cfg.fg_radius), dtype=0)


def cmd_cluster(args, cfg):
    img = io.read_image(args.image)
    pts = io.read_points(args.points, *img.shape[:2])
    mask = coarse.cluster_labels(img, pts, cfg.dist_clip, cfg.seed, cfg.kmeans_iters)
    io.write_raster(args.output, mask, dtype=0)


def cmd_ce_loss(args, cfg):
    mask = np.rint(io.read_raster(args.mask)).astype(np.int64)
    res = coarse.masked_cross_entropy(io.read_raster(args.pred), mask, cfg.eps_log)
    if args.grad:
        io.write_raster(args.grad, res.grad)
    _report(args, cfg, {"loss": res.loss})


def cmd_affinity_pairs(args, cfg):
    coarse_pred = affinity.coarse_instances(io.read_raster(args.coarse), cfg.T_f, cfg.T_b, cfg.connectivity)
    pairs = affinity.build_affinity_pairs(coarse_pred, cfg.gamma, stride=cfg.stride)
    io.write_pairs(args.output, pairs)
    if args.out:
        counts = pairs.counts()
        _report(args, cfg, {"pairs": len(pairs),
                            "counts": {n: int(counts[i]) for i, n in enumerate(affinity.SUBSET_NAMES)}})


def cmd_boundary_loss(args, cfg):
    res = affinity.boundary_loss(io.read_raster(args.boundary), io.read_pairs(args.pairs), cfg.eps_log, args.jobs)
    if args.grad:
        io.write_raster(args.grad, res.grad)
    _report(args, cfg, {"loss": res.loss, "terms": res.terms, "counts": res.counts})


def cmd_gradcheck(args, cfg):
    rep = gradcheck_kernel(args.kernel, args.size, cfg.seed, args.step, args.max_pixels, cfg.eps_log, cfg.gamma)
    _report(args, cfg, rep)


def cmd_post(args, cfg):
    inst = postprocess.instance_postprocess(io.read_raster(args.seg), io.read_raster(args.boundary), cfg)
    io.save_raster(args.output, inst)


def cmd_eval(args, cfg):
    _report(args, cfg, metrics.segmentation_metrics(io.load_raster(args.pred), io.load_raster(args.gt)))


def cmd_eval_det(args, cfg):
    prf = metrics.detection_prf(io.read_points(args.pred), io.read_points(args.gt), cfg.match_radius)
    _report(args, cfg, prf._asdict())


def _run_line(line: str) -> tuple:
    try:
        code = main(shlex.split(line))
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 2
    return line, code


def cmd_batch(args, cfg):
    with open(args.listfile) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_line, lines))
    else:
        results = [_run_line(ln) for ln in lines]
    failed = [(ln, c) for ln, c in results if c]
    for ln, c in failed:
        print(f"batch: exit {c}: {ln}", file=sys.stderr)
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pointseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        _add_config_flags(p)
        return p

    def shape_args(p):
        p.add_argument("--height", type=int)
        p.add_argument("--width", type=int)
        p.add_argument("--like", help="take the raster shape from this file")

    p = add("heatmap", cmd_heatmap, "points -> Gaussian target raster")
    p.add_argument("points")
    p.add_argument("-o", "--output", required=True)
    shape_args(p)

    p = add("det-loss", cmd_det_loss, "prediction + target -> weighted MSE and gradient")
    p.add_argument("pred")
    p.add_argument("target")
    p.add_argument("--grad")
    p.add_argument("--out", help="JSON report path (default: stdout)")

    p = add("peaks", cmd_peaks, "heatmap -> scored points")
    p.add_argument("heatmap")
    p.add_argument("-o", "--output", required=True)

    p = add("curriculum", cmd_curriculum, "detector heatmap + existing labels -> admitted points")
    p.add_argument("pred")
    p.add_argument("existing")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--n-det", type=int)
    p.add_argument("--n-gt", type=int)
    p.add_argument("--out", help="optional JSON report path")

    p = add("voronoi", cmd_voronoi, "points -> Voronoi tri-state mask")
    p.add_argument("points")
    p.add_argument("-o", "--output", required=True)
    shape_args(p)

    p = add("cluster", cmd_cluster, "RGB image + points -> cluster tri-state mask")
    p.add_argument("image")
    p.add_argument("points")
    p.add_argument("-o", "--output", required=True)

    p = add("ce-loss", cmd_ce_loss, "prediction + tri-state mask -> masked CE and gradient")
    p.add_argument("pred")
    p.add_argument("mask")
    p.add_argument("--grad")
    p.add_argument("--out")

    p = add("affinity-pairs", cmd_affinity_pairs, "coarse probability -> affinity pairs file")
    p.add_argument("coarse")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--out", help="optional JSON report path")

    p = add("boundary-loss", cmd_boundary_loss, "boundary map + pairs -> boundary loss and gradient")
    p.add_argument("boundary")
    p.add_argument("pairs")
    p.add_argument("--grad")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of a loss kernel")
    p.add_argument("kernel", choices=["det-loss", "ce-loss", "boundary-loss"])
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--max-pixels", type=int)
    p.add_argument("--out")

    p = add("post", cmd_post, "segmentation + boundary -> instance map")
    p.add_argument("seg")
    p.add_argument("boundary")
    p.add_argument("-o", "--output", required=True, help=".png writes a 16-bit PNG, anything else a raster file")

    p = add("eval", cmd_eval, "predicted + ground-truth instance maps -> metrics")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--out")

    p = add("eval-det", cmd_eval_det, "predicted + ground-truth points -> precision/recall/F1")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--out")

    p = add("batch", cmd_batch, "run one subcommand per line of a list file")
    p.add_argument("listfile")
    p.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        code = args.func(args, cfg)
    except ConfigError as exc:
        print(f"pointseg {args.command}: {exc}", file=sys.stderr)
        return 2
    except (PointSegError, OSError) as exc:
        print(f"pointseg {args.command}: {exc}", file=sys.stderr)
        return 1
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
