"""Seeded re-implementations of four benchmark image corruptions.

Semantics and per-severity constants follow the ``imagecorruptions`` package
(see ``data/corruption_constants.json``). Inputs and outputs are float images
in [0, 1]. Randomised corruptions draw from ``rng`` (any object exposing
``normal`` and ``uniform``, e.g. a numpy Generator or RandomState), created
from ``seed`` when not given.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.ndimage import zoom as _ndzoom

KINDS = ("gaussian_noise", "zoom_blur", "snow", "contrast")

CONSTANTS = json.loads(
    resources.files("syncmapv2").joinpath("data/corruption_constants.json").read_text())


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown corruption {self.kind!r}")
        if self.severity not in (1, 2, 3, 4, 5):
            raise ValueError("severity must be 1..5")


def _rng(seed, rng):
    return rng if rng is not None else np.random.default_rng(seed)


def clipped_zoom(img, factor):
    """Centre-crop 1/factor of the image and zoom it back up (order-1 spline)."""
    h, w = img.shape[:2]
    ch = int(np.ceil(h / float(factor)))
    cw = int(np.ceil(w / float(factor)))
    top, left = (h - ch) // 2, (w - cw) // 2
    crop = img[top:top + ch, left:left + cw]
    scale = (factor, factor) + (1,) * (img.ndim - 2)
    return _ndzoom(crop, scale, order=1)


def _add_clipped(out, layer):
    h = min(out.shape[0], layer.shape[0])
    w = min(out.shape[1], layer.shape[1])
    out[:h, :w] += layer[:h, :w]


def _shift(image, dx, dy):
    # translate with edge replication
    out = image
    if dx < 0:
        out = np.roll(out, image.shape[1] + dx, axis=1)
        out[:, dx:] = out[:, dx - 1:dx]
    elif dx > 0:
        out = np.roll(out, dx, axis=1)
        out[:, :dx] = out[:, dx:dx + 1]
    if dy < 0:
        out = np.roll(out, image.shape[0] + dy, axis=0)
        out[dy:, :] = out[dy - 1:dy, :]
    elif dy > 0:
        out = np.roll(out, dy, axis=0)
        out[:dy, :] = out[dy:dy + 1, :]
    return out


def motion_blur(x, radius, sigma, angle):
    """One-sided Gaussian-weighted smear along ``angle`` degrees."""
    width = radius * 2 + 1
    kernel = np.exp(-np.arange(width) ** 2 / (2 * sigma ** 2)) / (math.sqrt(2 * math.pi) * sigma)
    kernel /= kernel.sum()
    py = width * math.sin(math.radians(angle))
    px = width * math.cos(math.radians(angle))
    hyp = math.hypot(py, px)
    out = np.zeros_like(x, dtype=np.float32)
    for i in range(width):
        dy = -math.ceil(i * py / hyp - 0.5)
        dx = -math.ceil(i * px / hyp - 0.5)
        if abs(dy) >= x.shape[0] or abs(dx) >= x.shape[1]:
            break
        out = out + kernel[i] * _shift(x, dx, dy)
    return out


def gaussian_noise(img, severity=1, seed=0, rng=None, sigma=None):
    if sigma is None:
        sigma = CONSTANTS["gaussian_noise"]["sigma"][severity - 1]
    img = np.asarray(img, dtype=np.float64)
    noise = _rng(seed, rng).normal(size=img.shape, scale=sigma) if sigma else 0.0
    return np.clip(img + noise, 0.0, 1.0)


def contrast(img, severity=1, seed=0, rng=None):
    c = CONSTANTS["contrast"]["factor"][severity - 1]
    img = np.asarray(img, dtype=np.float64)
    means = img.mean(axis=(0, 1), keepdims=True)
    return np.clip((img - means) * c + means, 0.0, 1.0)


def zoom_factors(severity):
    z = CONSTANTS["zoom_blur"]
    return np.arange(1, z["stop"][severity - 1], z["step"][severity - 1])


def zoom_blur(img, severity=1, seed=0, rng=None):
    x = np.asarray(img, dtype=np.float32)
    factors = zoom_factors(severity)
    out = np.zeros_like(x)
    for f in factors:
        _add_clipped(out, clipped_zoom(x, f))
    return np.clip((x + out) / (len(factors) + 1), 0.0, 1.0).astype(np.float64)


def snow(img, severity=1, seed=0, rng=None, amount_scale=1.0, blend=None):
    """Snow layer + motion streaks + lightening.

    ``amount_scale`` multiplies the snow layer and ``blend`` overrides the
    weight of the original image (1.0 disables the lightening); both exist so
    the effect can be switched off in tests.
    """
    p = CONSTANTS["snow"]
    i = severity - 1
    rng = _rng(seed, rng)
    x = np.asarray(img, dtype=np.float32)
    h, w = x.shape[:2]
    layer = rng.normal(size=(h, w), loc=p["loc"][i], scale=p["scale"][i])
    layer = clipped_zoom(layer[..., None], p["zoom"][i])
    layer[layer < p["threshold"][i]] = 0
    layer = np.clip(layer.squeeze(-1), 0, 1)
    angle = rng.uniform(*p["angle_range"])
    layer = motion_blur(layer, p["blur_radius"][i], p["blur_sigma"][i], angle)
    layer = np.round(layer * 255).astype(np.uint8) / 255.0
    layer = layer[:h, :w, None] * amount_scale
    b = p["blend"][i] if blend is None else blend
    gray = (0.299 * x[..., 0] + 0.587 * x[..., 1] + 0.114 * x[..., 2]).astype(np.float32)
    x = b * x + (1 - b) * np.maximum(x, gray[..., None] * 1.5 + 0.5)
    out = x.astype(np.float64)
    _add_clipped(out, layer + np.rot90(layer, k=2))
    return np.clip(out, 0.0, 1.0)


_DISPATCH = {
    "gaussian_noise": gaussian_noise,
    "zoom_blur": zoom_blur,
    "snow": snow,
    "contrast": contrast,
}


def corrupt(img, spec: CorruptionSpec, rng=None):
    return _DISPATCH[spec.kind](img, spec.severity, seed=spec.seed, rng=rng)


def default_seed(image_id: str, kind: str, severity: int) -> int:
    """Stable per-(image, kind, severity) seed."""
    digest = hashlib.sha256(f"{image_id}|{kind}|{severity}".encode()).digest()
    return int.from_bytes(digest[:4], "little")
