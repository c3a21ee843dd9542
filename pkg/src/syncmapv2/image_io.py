"""Image decoding, resizing, patching and temporization.

Images are carried as float64 arrays of shape (H, W, 3) with values in [0, 1].
Label maps are integer arrays; ``VOID_LABEL`` marks pixels that are ignored
during scoring.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

VOID_LABEL = 65535


class ConfigurationError(ValueError):
    """Raised when image geometry is incompatible with the requested grid."""


class ImageFormatError(ValueError):
    """Raised when a file cannot be decoded as a supported image."""


@dataclass
class PatchGrid:
    rows: int
    cols: int
    patch_h: int
    patch_w: int
    patches: np.ndarray  # (rows * cols, patch_h, patch_w, 3)

    def coord(self, index: int) -> tuple[int, int]:
        return divmod(index, self.cols)

    def __len__(self) -> int:
        return self.rows * self.cols


def load_image(path) -> np.ndarray:
    """Read an 8-bit PNG/JPEG/PPM file into an (H, W, 3) array in [0, 1]."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        with Image.open(path) as im:
            im.load()
            rgb = im.convert("RGB")
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageFormatError(f"cannot decode {path}: {exc}") from exc
    return np.asarray(rgb, dtype=np.float64) / 255.0


def save_image(img: np.ndarray, path) -> None:
    data = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path)


def load_label_map(path) -> np.ndarray:
    """Load a ground-truth label map.

    Accepts a single-channel PNG (8 or 16 bit; 65535 is void) or a text file of
    whitespace-separated integers, one raster row per line.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if path.lower().endswith((".txt", ".csv", ".dat")):
        return np.loadtxt(path, dtype=np.int64, ndmin=2)
    try:
        with Image.open(path) as im:
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageFormatError(f"cannot decode {path}: {exc}") from exc
    if arr.ndim != 2:
        raise ImageFormatError(f"{path}: label map must be single-channel")
    return arr.astype(np.int64)


def save_label_map(labels: np.ndarray, path) -> None:
    path = os.fspath(path)
    labels = np.asarray(labels)
    if path.lower().endswith((".txt", ".csv", ".dat")):
        np.savetxt(path, labels, fmt="%d")
        return
    if labels.min() < 0 or labels.max() > VOID_LABEL:
        raise ValueError("label ids must fit in 16 bits")
    Image.fromarray(labels.astype(np.uint16)).save(path)


def _bilinear_axis(n_in: int, n_out: int):
    # half-pixel centres, edge clamped
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel-centred sampling."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be >= 1")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    r0, r1, fr = _bilinear_axis(h, out_h)
    c0, c1, fc = _bilinear_axis(w, out_w)
    fr = fr.reshape((-1,) + (1,) * (img.ndim - 1))
    top = img[r0] * (1.0 - fr) + img[r1] * fr
    fc = fc.reshape((-1,) + (1,) * (img.ndim - 2))
    return top[:, c0] * (1.0 - fc) + top[:, c1] * fc


def resize_nearest(labels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    labels = np.asarray(labels)
    h, w = labels.shape[:2]
    rows = np.minimum(((np.arange(out_h) + 0.5) * h / out_h).astype(np.intp), h - 1)
    cols = np.minimum(((np.arange(out_w) + 0.5) * w / out_w).astype(np.intp), w - 1)
    return labels[rows[:, None], cols[None, :]]


def split_patches(img: np.ndarray, rows: int, cols: int) -> PatchGrid:
    img = np.asarray(img)
    h, w = img.shape[:2]
    if h % rows or w % cols:
        raise ConfigurationError(
            f"image {h}x{w} is not divisible into a {rows}x{cols} grid")
    ph, pw = h // rows, w // cols
    patches = (img.reshape(rows, ph, cols, pw, -1)
               .transpose(0, 2, 1, 3, 4)
               .reshape(rows * cols, ph, pw, -1))
    return PatchGrid(rows, cols, ph, pw, np.ascontiguousarray(patches))


def assemble_patches(grid: PatchGrid) -> np.ndarray:
    c = grid.patches.shape[-1]
    return (grid.patches.reshape(grid.rows, grid.cols, grid.patch_h, grid.patch_w, c)
            .transpose(0, 2, 1, 3, 4)
            .reshape(grid.rows * grid.patch_h, grid.cols * grid.patch_w, c))


def temporize_patch(patch: np.ndarray, K: int = 3) -> np.ndarray:
    """Turn a (h, w, 3) patch into a (w*K, 3h) input sequence.

    The R, G and B planes are stacked vertically into a (3h, w) array, tiled K
    times horizontally, and its columns become the time steps.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 3 or patch.shape[2] != 3:
        raise ValueError("patch must have shape (h, w, 3)")
    stacked = np.concatenate([patch[:, :, c] for c in range(3)], axis=0)
    return np.tile(stacked, (1, K)).T.copy()


def temporize_patches(patches: np.ndarray, K: int = 3) -> np.ndarray:
    """Vectorised temporize_patch over a (n, h, w, 3) stack -> (n, w*K, 3h)."""
    patches = np.asarray(patches, dtype=np.float64)
    n, h, w, _ = patches.shape
    stacked = patches.transpose(0, 3, 1, 2).reshape(n, 3 * h, w)
    return np.tile(stacked, (1, 1, K)).transpose(0, 2, 1).copy()


def labels_to_pixels(grid_labels: np.ndarray, out_h: int, out_w: int,
                     intermediate: int | None = 288) -> np.ndarray:
    """Upscale grid-scale labels to a pixel raster without mixing labels.

    Labels are first blown up to ``intermediate`` x ``intermediate`` (the
    working resolution) and then resized to the output size, both with
    nearest-neighbour sampling.
    """
    labels = np.asarray(grid_labels)
    if intermediate:
        labels = resize_nearest(labels, intermediate, intermediate)
    return resize_nearest(labels, out_h, out_w)
