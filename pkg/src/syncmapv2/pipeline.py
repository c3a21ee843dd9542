"""End-to-end segmentation and the three benchmark protocols.

Preprocessing (reservoir responses and the DTW similarity matrix) happens once
per image and condition; the map dynamics then draw activation sets from the
precomputed proximity/similarity lists.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import clustering, corruption, dynamics, evaluation, image_io, reservoir, similarity
from .config import PipelineConfig

log = logging.getLogger(__name__)


# --- activation sets ---------------------------------------------------------------

def neighbor_lists(sim_matrix, cfg: PipelineConfig):
    """Proximity lists (ragged) and similarity lists (n, list_size) for all patches."""
    n = cfg.n_patches
    prox = [similarity.proximity_neighbors(i, cfg.grid, cfg.grid) for i in range(n)]
    sim = similarity.top_similar_all(sim_matrix, cfg.list_size)
    return prox, sim


def sample_input_step(prox, sim, rng) -> np.ndarray:
    """Pick a random reference patch and return its activated set."""
    ref = int(rng.integers(len(prox)))
    return np.union1d(prox[ref], sim[ref])


def input_source(prox, sim):
    """Fast equivalent of sample_input_step with the unions precomputed."""
    unions = [np.union1d(p, s) for p, s in zip(prox, sim)]
    n = len(unions)

    def source(rng):
        return unions[int(rng.integers(n))]

    return source


# --- single image ----------------------------------------------------------------

@dataclass
class Preprocessed:
    resized: np.ndarray
    sim_matrix: np.ndarray
    seconds: float


@dataclass
class Segmentation:
    grid_labels: list  # one (grid, grid) array per n_clu
    n_values: list
    state: dynamics.MapState
    preprocessed: Preprocessed
    seconds: float
    map_coords: np.ndarray = field(repr=False, default=None)

    def pixel_labels(self, n_clu, out_h, out_w, intermediate=None):
        i = self.n_values.index(n_clu)
        inter = self.preprocessed.resized.shape[0] if intermediate is None else intermediate
        return image_io.labels_to_pixels(self.grid_labels[i], out_h, out_w, inter)


def make_weights(cfg: PipelineConfig) -> reservoir.EsnWeights:
    return reservoir.init_esn(cfg.esn)


def preprocess(img, cfg: PipelineConfig, weights, cache_dir=None) -> Preprocessed:
    t0 = time.perf_counter()
    resized = image_io.resize_bilinear(img, cfg.resize, cfg.resize)
    grid = image_io.split_patches(resized, cfg.grid, cfg.grid)
    seqs = image_io.temporize_patches(grid.patches, cfg.K)
    key = None
    if cache_dir is not None:
        key = similarity.cache_key(resized, cfg.esn.seed,
                                   f"{cfg.grid}|{cfg.K}|{json.dumps(dataclasses.asdict(cfg.esn), sort_keys=True)}")
        path = os.path.join(cache_dir, f"{key}.sim")
        if os.path.exists(path):
            return Preprocessed(resized, similarity.load_matrix(path), time.perf_counter() - t0)
    responses = reservoir.run_patches(weights, seqs)
    sim = similarity.cached_similarity(responses, cache_dir, key)
    if not sim.any():
        log.warning("degenerate image: every patch is identical to every other")
    return Preprocessed(resized, sim, time.perf_counter() - t0)


def segment_image(img, cfg: PipelineConfig, weights=None, state=None, *,
                  pre: Preprocessed | None = None, tau=None, cache_dir=None) -> Segmentation:
    """Segment one image; pass ``state`` to keep learning on an existing map."""
    t0 = time.perf_counter()
    weights = make_weights(cfg) if weights is None else weights
    pre = preprocess(img, cfg, weights, cache_dir) if pre is None else pre
    if state is None:
        state = dynamics.init_map(cfg.n_patches, cfg.dynamics)
    prox, sim = neighbor_lists(pre.sim_matrix, cfg)
    tau = cfg.tau * cfg.tau_multiplier if tau is None else tau
    coords = dynamics.run(input_source(prox, sim), tau, state, cfg.dynamics)
    cuts = clustering.cluster_range(coords, cfg.n_min, cfg.n_max, cfg.linkage)
    labels = [c.reshape(cfg.grid, cfg.grid) for c in cuts]
    return Segmentation(labels, list(range(cfg.n_min, cfg.n_max + 1)), state, pre,
                        time.perf_counter() - t0, coords)


# --- overlays -----------------------------------------------------------------------

def palette(n):
    """Deterministic, well-spread RGB colours (golden-angle hue walk)."""
    import colorsys
    cols = []
    for i in range(n):
        h = (i * 0.618033988749895) % 1.0
        s = 0.65 + 0.35 * ((i // 7) % 2)
        v = 0.95 - 0.3 * ((i // 3) % 2)
        cols.append(colorsys.hsv_to_rgb(h, s, v))
    return np.array(cols)


def overlay(img, labels, alpha=0.5):
    labels = np.asarray(labels)
    ids, inv = np.unique(labels, return_inverse=True)
    colors = palette(ids.size)[inv.reshape(labels.shape)]
    return (1 - alpha) * np.asarray(img, dtype=np.float64) + alpha * colors


def emit_overlay(img, labels, path):
    data = np.clip(np.rint(overlay(img, labels) * 255), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG", optimize=False)
    return path


# --- manifests and reports -----------------------------------------------------------

@dataclass
class ManifestEntry:
    image_id: str
    image: str
    gt: str


def read_manifest(path) -> list[ManifestEntry]:
    """One ``image_path gt_path`` pair per line; relative paths resolve against the manifest."""
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"manifest line needs two paths: {raw!r}")
            img, gt = (p if os.path.isabs(p) else os.path.join(base, p) for p in parts)
            entries.append(ManifestEntry(os.path.splitext(os.path.basename(img))[0], img, gt))
    return entries


@dataclass
class RunRecord:
    image_id: str
    condition: str
    config_hash: str
    seconds: float
    miou: dict
    artifacts: list


def _summary(scores: evaluation.ScoreTable) -> dict:
    n_star, ods_val = evaluation.ods(scores)
    return {"ods": {"n_clu": n_star, "miou": ods_val}, "ois": evaluation.ois(scores)}


def _safe_p(test, a, b):
    try:
        return test(a, b)
    except (evaluation.StatisticsError, ValueError):
        return None


def _write_outputs(out_dir, scores, report):
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    scores.to_csv(os.path.join(out_dir, "scores.csv"))
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)


def _score_segmentation(seg, gt, cfg, entry, condition, scores, out_dir, img):
    row = {}
    h, w = gt.shape
    for n, grid_labels in zip(seg.n_values, seg.grid_labels):
        pix = image_io.labels_to_pixels(grid_labels, h, w, cfg.resize)
        miou = evaluation.unsupervised_miou(pix, gt)
        scores.add(entry.image_id, condition, n, miou)
        row[n] = miou
    artifacts = []
    if out_dir is not None and cfg.overlays:
        odir = os.path.join(out_dir, "overlays")
        os.makedirs(odir, exist_ok=True)
        best = max(row, key=lambda n: (row[n], -n))
        ih, iw = img.shape[:2]
        pix = image_io.labels_to_pixels(seg.grid_labels[seg.n_values.index(best)], ih, iw, cfg.resize)
        tag = condition.replace("/", "_s")
        artifacts.append(emit_overlay(img, pix, os.path.join(odir, f"{entry.image_id}_{tag}.png")))
    return RunRecord(entry.image_id, condition, cfg.digest(), seg.seconds, row, artifacts)


def _apply_condition(img, image_id, kind, severity, cfg):
    if kind is None or kind == "identity":
        return img
    seed = (corruption.default_seed(image_id, kind, severity) + cfg.corruption_seed) % 2**32
    return corruption.corrupt(img, corruption.CorruptionSpec(kind, severity, seed))


def _process_entry(args):
    entry, cfg, conditions, out_dir, cache_dir = args
    weights = make_weights(cfg)
    img = image_io.load_image(entry.image)
    gt = image_io.load_label_map(entry.gt)
    scores = evaluation.ScoreTable()
    records = []
    for condition, kind, severity in conditions:
        cimg = _apply_condition(img, entry.image_id, kind, severity, cfg)
        seg = segment_image(cimg, cfg, weights, cache_dir=cache_dir)
        records.append(_score_segmentation(seg, gt, cfg, entry, condition, scores, out_dir, cimg))
    return scores, records


def _safe_process(args):
    try:
        return _process_entry(args)
    except (OSError, ValueError) as exc:
        return f"{type(exc).__name__}: {exc}"


def _run_conditions(entries, cfg, conditions, out_dir, cache_dir):
    scores = evaluation.ScoreTable()
    records, failures = [], []
    jobs = [(e, cfg, conditions, out_dir, cache_dir) for e in entries]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(_safe_process, jobs))
    else:
        results = [_safe_process(j) for j in jobs]
    for entry, res in zip(entries, results):
        if isinstance(res, str):
            log.error("image %s failed: %s", entry.image_id, res)
            failures.append({"image": entry.image_id, "error": res})
            continue
        s, r = res
        scores.extend(s)
        records.extend(r)
    return scores, records, failures


def _entries(manifest):
    return read_manifest(manifest) if isinstance(manifest, (str, os.PathLike)) else list(manifest)


def run_standard(manifest, cfg: PipelineConfig, out_dir=None, cache_dir=None):
    """Fresh map per image; scores every cluster count and writes scores.csv/report.json."""
    entries = _entries(manifest)
    scores, records, failures = _run_conditions(entries, cfg, [("clean", None, 0)], out_dir, cache_dir)
    report = {"mode": "standard", "config_hash": cfg.digest(), "failures": failures,
              "images": len(entries), "runs": [dataclasses.asdict(r) for r in records]}
    if scores:
        report.update(_summary(scores))
    _write_outputs(out_dir, scores, report)
    return scores, report


def run_robustness(manifest, cfg: PipelineConfig, out_dir=None, cache_dir=None):
    entries = _entries(manifest)
    conditions = [("clean", None, 0)]
    for kind in cfg.corruptions:
        for sev in cfg.severities:
            conditions.append((f"{kind}/{sev}", kind, sev))
    scores, records, failures = _run_conditions(entries, cfg, conditions, out_dir, cache_dir)
    report = {"mode": "robustness", "config_hash": cfg.digest(), "failures": failures,
              "images": len(entries), "conditions": {}, "kinds": {}}
    if scores:
        clean = scores.where("clean")
        clean_best = evaluation.per_image_best(clean)
        for cond in scores.conditions():
            report["conditions"][cond] = _summary(scores.where(cond))
        clean_ois = report["conditions"]["clean"]["ois"]
        for kind in cfg.corruptions:
            conds = [f"{kind}/{s}" for s in cfg.severities]
            ois_vals = [report["conditions"][c]["ois"] for c in conds]
            ods_vals = [report["conditions"][c]["ods"]["miou"] for c in conds]
            # per-image OIS averaged over severities, paired with clean
            per_img = {img: np.mean([evaluation.per_image_best(scores.where(c))[img] for c in conds])
                       for img in clean_best}
            a = [clean_best[i] for i in clean_best]
            b = [per_img[i] for i in clean_best]
            mean_ois = float(np.mean(ois_vals))
            report["kinds"][kind] = {
                "ois_mean": mean_ois,
                "ods_mean": float(np.mean(ods_vals)),
                "ois_relative_drop": (clean_ois - mean_ois) / clean_ois if clean_ois else None,
                "p_independent": _safe_p(evaluation.ttest_independent, a, b),
                "p_paired": _safe_p(evaluation.ttest_paired, a, b),
            }
    report["runs"] = [dataclasses.asdict(r) for r in records]
    _write_outputs(out_dir, scores, report)
    return scores, report


def run_adaptability(manifest, cfg: PipelineConfig, out_dir=None, cache_dir=None,
                     reinit_scores=None):
    """Process images in order on one persistent map (never re-initialised).

    ``reinit_scores`` (a standard-mode ScoreTable on the same images) is
    compared with a paired t-test; it is computed here when not supplied.
    """
    if cfg.jobs > 1:
        raise ValueError("adaptability runs are order dependent and cannot be parallelised")
    entries = _entries(manifest)
    if cfg.dynamics.trace_prob == 0:
        cfg = dataclasses.replace(cfg, dynamics=dataclasses.replace(cfg.dynamics, trace_prob=0.01))
    weights = make_weights(cfg)
    state = dynamics.init_map(cfg.n_patches, cfg.dynamics)
    coords_id = id(state.coords)
    scores = evaluation.ScoreTable()
    records, failures, boundaries = [], [], []
    condition = f"adapt/{cfg.tau_multiplier}tau"
    for entry in entries:
        try:
            img = image_io.load_image(entry.image)
            gt = image_io.load_label_map(entry.gt)
        except (OSError, ValueError) as exc:
            failures.append({"image": entry.image_id, "error": f"{type(exc).__name__}: {exc}"})
            continue
        boundaries.append(state.step)
        seg = segment_image(img, cfg, weights, state, cache_dir=cache_dir)
        assert id(state.coords) == coords_id
        records.append(_score_segmentation(seg, gt, cfg, entry, condition, scores, out_dir, img))
    report = {"mode": "adaptability", "config_hash": cfg.digest(), "failures": failures,
              "images": len(entries), "boundaries": boundaries}
    if scores:
        report.update(_summary(scores))
        if reinit_scores is None:
            reinit_scores, _ = run_standard([e for e in entries
                                             if e.image_id in evaluation.per_image_best(scores)],
                                            dataclasses.replace(cfg, overlays=False, tau_multiplier=1),
                                            None, cache_dir)
        if reinit_scores:
            report["reinit"] = _summary(reinit_scores)
        with_re = evaluation.per_image_best(reinit_scores)
        without = evaluation.per_image_best(scores)
        common = [i for i in without if i in with_re]
        report["p_paired"] = _safe_p(evaluation.ttest_paired,
                                     [with_re[i] for i in common], [without[i] for i in common])
    report["runs"] = [dataclasses.asdict(r) for r in records]
    if out_dir is not None:
        tdir = os.path.join(out_dir, "traces")
        os.makedirs(tdir, exist_ok=True)
        with open(os.path.join(tdir, "dpos.csv"), "w") as fh:
            fh.write("step,dpos\n")
            for t, d in state.trace:
                fh.write(f"{t},{d!r}\n")
        cdir = os.path.join(out_dir, "checkpoints")
        os.makedirs(cdir, exist_ok=True)
        dynamics.save_checkpoint(state, os.path.join(cdir, "final.map"))
    report["trace"] = state.trace
    _write_outputs(out_dir, scores, {k: v for k, v in report.items() if k != "trace"})
    return scores, report
