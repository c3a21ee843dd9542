"""Scoring: unsupervised mIoU, ODS/OIS, baselines and significance tests."""
from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .image_io import VOID_LABEL, labels_to_pixels

log = logging.getLogger(__name__)


class StatisticsError(ArithmeticError):
    pass


def binary_iou(pred_mask, gt_mask) -> float:
    pred_mask = np.asarray(pred_mask, dtype=bool)
    gt_mask = np.asarray(gt_mask, dtype=bool)
    if pred_mask.shape != gt_mask.shape:
        raise ValueError(f"mask shapes differ: {pred_mask.shape} vs {gt_mask.shape}")
    union = np.count_nonzero(pred_mask | gt_mask)
    if union == 0:
        log.debug("IoU of two empty masks taken as 1")
        return 1.0
    return np.count_nonzero(pred_mask & gt_mask) / union


def segment_ious(pred, gt, void=VOID_LABEL):
    """Best IoU for each ground-truth segment, in ascending GT label order."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    keep = gt != void
    g_ids, g = np.unique(gt[keep], return_inverse=True)
    if g_ids.size == 0:
        raise ValueError("ground truth has no non-void segment")
    _, p = np.unique(pred[keep], return_inverse=True)
    g, p = g.reshape(-1), p.reshape(-1)
    n_p = int(p.max()) + 1
    inter = np.bincount(g * n_p + p, minlength=g_ids.size * n_p).reshape(g_ids.size, n_p)
    union = inter.sum(1)[:, None] + inter.sum(0)[None, :] - inter
    return (inter / union).max(axis=1)


def unsupervised_miou(pred, gt, void=VOID_LABEL) -> float:
    """Mean over GT segments of the best IoU reached by any predicted segment.

    ``pred`` must already be at the ground-truth resolution (see labels_to_pixels).
    Void ground-truth pixels are dropped from both sides.
    """
    return float(np.mean(segment_ious(pred, gt, void)))


def score_grid_labels(grid_labels, gt, void=VOID_LABEL, intermediate=288) -> float:
    h, w = np.asarray(gt).shape
    return unsupervised_miou(labels_to_pixels(grid_labels, h, w, intermediate), gt, void)


# --- score tables ---------------------------------------------------------------

@dataclass(frozen=True)
class Score:
    image: str
    condition: str
    n_clu: int
    miou: float


class ScoreTable(list):
    """List of Score rows with CSV persistence."""

    header = ("image", "condition", "n_clu", "miou")

    def add(self, image, condition, n_clu, miou):
        if not 0.0 <= miou <= 1.0:
            raise ValueError(f"mIoU {miou} outside [0, 1]")
        self.append(Score(str(image), str(condition), int(n_clu), float(miou)))

    def where(self, condition):
        return ScoreTable(r for r in self if r.condition == condition)

    def conditions(self):
        return list(dict.fromkeys(r.condition for r in self))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header)
            for r in self:
                w.writerow((r.image, r.condition, r.n_clu, repr(r.miou)))

    @classmethod
    def from_csv(cls, path):
        t = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                t.add(row["image"], row["condition"], int(row["n_clu"]), float(row["miou"]))
        return t


def _by_image(scores):
    per = defaultdict(dict)
    for r in scores:
        per[r.image][r.n_clu] = r.miou
    return per


def ods(scores) -> tuple[int, float]:
    """Cluster count with the best dataset-mean mIoU (ties to the smaller count)."""
    by_n = defaultdict(list)
    for r in scores:
        by_n[r.n_clu].append(r.miou)
    if not by_n:
        raise ValueError("empty score table")
    best = max(sorted(by_n), key=lambda n: (float(np.mean(by_n[n])), -n))
    return best, float(np.mean(by_n[best]))


def ois(scores) -> float:
    per = _by_image(scores)
    if not per:
        raise ValueError("empty score table")
    return float(np.mean([max(v.values()) for v in per.values()]))


def per_image_best(scores) -> dict[str, float]:
    return {img: max(v.values()) for img, v in _by_image(scores).items()}


# --- baselines ------------------------------------------------------------------

def random_baseline(gt_shape, n_labels, seed=0, grid=(48, 48), intermediate=288):
    """Random labels on the patch grid, upscaled to ``gt_shape``."""
    rng = np.random.default_rng(seed)
    cells = rng.integers(0, n_labels, size=grid)
    return labels_to_pixels(cells, gt_shape[0], gt_shape[1], intermediate)


def _kmeans_pp(X, k, rng):
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(X.shape[0])]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i:] = centers[0]
            break
        idx = rng.choice(X.shape[0], p=d2 / total)
        centers[i] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[i]) ** 2, axis=1))
    return centers


def kmeans(X, k, seed=0, max_iter=100, tol=1e-6):
    """Lloyd's algorithm with k-means++ seeding. Returns (labels, centers, sse)."""
    X = np.asarray(X, dtype=np.float64)
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(X, k, rng)
    xx = np.einsum("ij,ij->i", X, X)
    for _ in range(max_iter):
        d2 = xx[:, None] - 2 * X @ centers.T + np.einsum("ij,ij->i", centers, centers)[None]
        labels = np.argmin(d2, axis=1)
        new = centers.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new[j] = X[members].mean(axis=0)
        shift = np.max(np.linalg.norm(new - centers, axis=1))
        centers = new
        if shift < tol:
            break
    d2 = xx[:, None] - 2 * X @ centers.T + np.einsum("ij,ij->i", centers, centers)[None]
    labels = np.argmin(d2, axis=1)
    sse = float(np.sum((X - centers[labels]) ** 2))
    return labels, centers, sse


def kmeans_baseline(img, k, seed=0) -> np.ndarray:
    """Colour k-means over pixels; returns an (H, W) label map."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    labels, _, _ = kmeans(img.reshape(h * w, -1), k, seed)
    return labels.reshape(h, w)


# --- significance tests ----------------------------------------------------------

def ttest_independent(a, b) -> float:
    """Two-sided Welch t-test p-value."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise StatisticsError("each sample needs at least two values")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 == 0:
        raise StatisticsError("both samples have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    dof = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    return float(2.0 * stats.t.sf(abs(t), dof))


def ttest_paired(a, b) -> float:
    """Two-sided paired t-test p-value."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    if a.size < 2:
        raise StatisticsError("need at least two pairs")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0:
        raise StatisticsError("differences have zero variance")
    t = d.mean() / (sd / math.sqrt(d.size))
    return float(2.0 * stats.t.sf(abs(t), d.size - 1))
