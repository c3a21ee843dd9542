"""Command line entry point (``syncmapv2 <command>``)."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from . import corruption, evaluation, image_io, pipeline
from .config import ABLATION_FLAGS, PipelineConfig, apply_overrides, desk_profile, load_config

log = logging.getLogger("syncmapv2")


def _config_args(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--desk-profile", action="store_true",
                   help="24x24 grid, 20k steps, 500-step averaging window")
    p.add_argument("--seed", type=int, help="seed for the reservoir and the map")
    p.add_argument("--alpha-neg-constant", type=float,
                   help="replace the adaptive repulsion rate by a constant")
    p.add_argument("--ablation", default="",
                   help="comma list of components to disable: " + ",".join(ABLATION_FLAGS))
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (dotted for esn.* / dynamics.*)")
    p.add_argument("--jobs", type=int)
    p.add_argument("--cache-dir", help="directory for cached similarity matrices")


def build_config(args) -> PipelineConfig:
    cfg = desk_profile() if args.desk_profile else PipelineConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    items = {}
    for kv in args.set:
        if "=" not in kv:
            raise SystemExit(f"--set expects KEY=VALUE, got {kv!r}")
        k, v = kv.split("=", 1)
        items[k.strip()] = v
    if args.seed is not None:
        items["esn.seed"] = args.seed
        items["dynamics.seed"] = args.seed
    if args.alpha_neg_constant is not None:
        items["dynamics.alpha_neg_constant"] = args.alpha_neg_constant
    if args.jobs is not None:
        items["jobs"] = args.jobs
    if items:
        cfg = apply_overrides(cfg, items)
    if args.ablation:
        cfg = cfg.with_ablation([f.strip() for f in args.ablation.split(",") if f.strip()])
    return cfg


def cmd_segment(args):
    cfg = build_config(args)
    img = image_io.load_image(args.image)
    seg = pipeline.segment_image(img, cfg, cache_dir=args.cache_dir)
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.image))[0]
    h, w = img.shape[:2]
    for n in seg.n_values:
        if args.n and n not in args.n:
            continue
        pix = seg.pixel_labels(n, h, w, cfg.resize)
        image_io.save_label_map(pix, os.path.join(args.out, f"{stem}_n{n:02d}.png"))
        if cfg.overlays:
            pipeline.emit_overlay(img, pix, os.path.join(args.out, f"{stem}_n{n:02d}_overlay.png"))
    print(f"segmented {args.image} in {seg.seconds:.1f}s -> {args.out}")
    return 0


def _bench(fn, args, **extra):
    cfg = build_config(args)
    if getattr(args, "tau_multiplier", None):
        cfg = dataclasses.replace(cfg, tau_multiplier=args.tau_multiplier)
    if getattr(args, "kinds", None):
        cfg = dataclasses.replace(cfg, corruptions=tuple(args.kinds.split(",")))
    _, report = fn(args.manifest, cfg, args.out, args.cache_dir, **extra)
    summary = {k: report[k] for k in ("ods", "ois", "kinds", "p_paired") if k in report}
    print(json.dumps(summary, indent=2, sort_keys=True, default=float))
    if report["failures"]:
        print(f"{len(report['failures'])} image(s) failed, see report.json", file=sys.stderr)
    return 0


def cmd_corrupt(args):
    img = image_io.load_image(args.image)
    image_id = os.path.splitext(os.path.basename(args.image))[0]
    seed = corruption.default_seed(image_id, args.kind, args.severity) if args.seed is None else args.seed
    out = corruption.corrupt(img, corruption.CorruptionSpec(args.kind, args.severity, seed))
    image_io.save_image(out, args.out)
    return 0


def cmd_eval(args):
    pred = image_io.load_label_map(args.pred)
    gt = image_io.load_label_map(args.gt)
    if pred.shape != gt.shape:
        pred = image_io.resize_nearest(pred, *gt.shape)
    print(f"{evaluation.unsupervised_miou(pred, gt):.6f}")
    return 0


def _mat_segmentations(path):
    from scipy.io import loadmat
    data = loadmat(path)
    gts = data["groundTruth"].ravel()
    return [np.asarray(g["Segmentation"][0, 0]) for g in gts]


def cmd_convert_gt(args):
    """BSD500 .mat (annotation with the fewest segments) or VOC PNG (255 -> void)."""
    if args.src.lower().endswith(".mat"):
        segs = _mat_segmentations(args.src)
        counts = [np.unique(s).size for s in segs]
        pick = int(np.argmin(counts))
        labels = segs[pick].astype(np.int64)
        log.info("%s: annotation %d of %d (%d segments)", args.src, pick, len(segs), counts[pick])
    else:
        labels = image_io.load_label_map(args.src)
        if args.void is not None:
            labels = np.where(labels == args.void, image_io.VOID_LABEL, labels)
    image_io.save_label_map(labels, args.out)
    return 0


def make_parser():
    ap = argparse.ArgumentParser(prog="syncmapv2", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment one image")
    p.add_argument("image")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, nargs="*", help="cluster counts to write (default all)")
    _config_args(p)
    p.set_defaults(func=cmd_segment)

    for name, fn, helptext in (("bench-standard", pipeline.run_standard, "fresh map per image"),
                               ("bench-robustness", pipeline.run_robustness, "clean vs corrupted"),
                               ("bench-adaptability", pipeline.run_adaptability,
                                "one persistent map across images")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("manifest")
        p.add_argument("--out", required=True)
        _config_args(p)
        if name == "bench-robustness":
            p.add_argument("--kinds", help="comma list of corruption kinds")
        if name == "bench-adaptability":
            p.add_argument("--tau-multiplier", type=int, choices=(1, 2))
        p.set_defaults(func=lambda a, fn=fn: _bench(fn, a))

    p = sub.add_parser("corrupt", help="apply one corruption")
    p.add_argument("image")
    p.add_argument("--kind", required=True, choices=corruption.KINDS)
    p.add_argument("--severity", type=int, required=True, choices=range(1, 6))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("eval", help="unsupervised mIoU of a label map")
    p.add_argument("pred")
    p.add_argument("gt")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("convert-gt", help="convert a ground-truth file to a uint16 PNG")
    p.add_argument("src")
    p.add_argument("out")
    p.add_argument("--void", type=int, help="label to map to void (255 for VOC)")
    p.set_defaults(func=cmd_convert_gt)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
