"""Attractor-repeller map dynamics.

Every input node owns a point in a k-dimensional map space. At each step the
activated (positive) nodes are pulled toward their centroid and an equally
sized random sample of the remaining (negative) nodes is pushed away from its
own centroid. Step sizes adapt to how tight the positive set already is, a
global leaking rate scales every move, the space is re-standardised after each
step, and the readout averages the map over a trailing window.
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

_SINGULAR = 1e-12


class MapStateError(RuntimeError):
    pass


@dataclass
class DynamicsConfig:
    k: int = 15
    beta: float = 0.1
    movmean_window: int = 2000
    alpha_pos_floor: float = 0.05
    alpha_neg_cap: float = 1.5
    neg_amp_a: float = 0.01
    neg_amp_b: float = 2.0
    lr_smoothing: float = 0.1
    seed: int = 0
    # component switches (all on = full model)
    adaptive_lr: bool = True
    symmetric_activation: bool = True
    space_normalization: bool = True
    moving_average: bool = True
    leaking: bool = True
    alpha_neg_constant: float | None = None
    constant_lr: float = 0.1
    # bytes allowed for the moving-average ring buffer
    memory_budget: int = 256 * 2**20
    trace_prob: float = 0.0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if self.movmean_window < 1:
            raise ValueError("movmean_window must be >= 1")


class MovingAverage:
    """Mean of the last ``window`` pushed snapshots.

    Keeps a ring buffer when it fits in ``budget`` bytes. Otherwise it only sums
    what it is given since the last reset, and the caller is responsible for
    pushing just the final ``window`` steps.
    """

    def __init__(self, shape, window, budget):
        self.shape = tuple(shape)
        self.window = int(window)
        self.ring = self.window * math.prod(self.shape) * 8 <= budget
        self.reset()

    def reset(self):
        if self.ring:
            self._buf = np.empty((self.window,) + self.shape)
        else:
            self._sum = np.zeros(self.shape)
        self.count = 0
        self.pushed = 0

    def push(self, x):
        if self.ring:
            self._buf[self.pushed % self.window] = x
        else:
            self._sum += x
        self.pushed += 1
        self.count = min(self.pushed, self.window) if self.ring else self.pushed

    def mean(self):
        if self.count == 0:
            raise MapStateError("no snapshots accumulated")
        if self.ring:
            return self._buf[:self.count].mean(axis=0)
        return self._sum / self.count


@dataclass
class MapState:
    coords: np.ndarray
    smoothed_rate: float
    rng: np.random.Generator
    avg: MovingAverage
    step: int = 0
    last_rates: tuple = (math.nan, math.nan)
    trace: list = field(default_factory=list)

    @property
    def n(self):
        return self.coords.shape[0]

    @property
    def k(self):
        return self.coords.shape[1]


def normalize_space(coords, out=None):
    """Standardise every column to mean 0 and population std 1 (in place by default)."""
    coords = np.asarray(coords, dtype=np.float64)
    out = coords if out is None else out
    mean = coords.mean(axis=0)
    np.subtract(coords, mean, out=out)
    std = np.sqrt(np.einsum("ij,ij->j", out, out) / out.shape[0])
    flat = std == 0
    if flat.any():
        log.warning("zero-variance map dimensions %s left unscaled", np.flatnonzero(flat).tolist())
        std = np.where(flat, 1.0, std)
    out /= std
    return out


def normalize_sphere(coords, scale=1.0):
    """Original-model normalisation: shrink so the farthest node sits on radius ``scale``."""
    r = np.sqrt(np.einsum("ij,ij->i", coords, coords)).max()
    if r > 0:
        coords *= scale / r
    return coords


def init_map(n: int, cfg: DynamicsConfig) -> MapState:
    if n < 2:
        raise ValueError("need at least two nodes")
    rng = np.random.default_rng(cfg.seed)
    coords = rng.uniform(-1.0, 1.0, size=(n, cfg.k))
    if cfg.space_normalization:
        normalize_space(coords)
    else:
        normalize_sphere(coords)
    avg = MovingAverage((n, cfg.k), cfg.movmean_window, cfg.memory_budget)
    return MapState(coords, cfg.alpha_pos_floor, rng, avg)


def select_activation(ps, n, rng, symmetric=True):
    """Sample the negative set for positive set ``ps``.

    Returns ``(ps, ns)`` as index arrays, or ``None`` when ``ps`` is empty.
    """
    ps = np.unique(np.asarray(ps, dtype=np.intp))
    if ps.size == 0:
        return None
    mask = np.ones(n, dtype=bool)
    mask[ps] = False
    rest = np.flatnonzero(mask)
    if not symmetric or rest.size <= ps.size:
        return ps, rest
    return ps, np.sort(rng.choice(rest, size=ps.size, replace=False))


def centroids(coords, ps, ns):
    """Centroids of the positive and negative sets, or None if either has <= 1 member."""
    if len(ps) <= 1 or len(ns) <= 1:
        return None
    return coords[ps].mean(axis=0), coords[ns].mean(axis=0)


def _unit_toward(points, target):
    delta = target - points
    dist = np.sqrt(np.einsum("ij,ij->i", delta, delta))
    safe = dist >= _SINGULAR
    unit = np.zeros_like(delta)
    unit[safe] = delta[safe] / dist[safe, None]
    return unit, dist


def feedback(coords, ps, ns, cp, cn):
    """Unit displacement per node: toward cp for ps, away from cn for ns, zero elsewhere."""
    disp = np.zeros_like(coords)
    disp[ps] = _unit_toward(coords[ps], cp)[0]
    disp[ns] = -_unit_toward(coords[ns], cn)[0]
    return disp


def adaptive_rates(state: MapState, d_pos: float, n: int, cfg: DynamicsConfig):
    """Update the smoothed positive rate from d_pos and return (alpha_pos, alpha_neg)."""
    raw = d_pos / math.sqrt(cfg.k)
    state.smoothed_rate += cfg.lr_smoothing * (raw - state.smoothed_rate)
    a_pos = max(state.smoothed_rate, cfg.alpha_pos_floor)
    if cfg.alpha_neg_constant is not None:
        a_neg = cfg.alpha_neg_constant
    else:
        a_neg = min(state.smoothed_rate * (cfg.neg_amp_a * n + cfg.neg_amp_b), cfg.alpha_neg_cap)
    return a_pos, a_neg


def step(state: MapState, sets, cfg: DynamicsConfig, record: bool = True) -> MapState:
    """Apply one update for the activation sets ``(ps, ns)`` (or None to skip)."""
    c = None if sets is None else centroids(state.coords, *sets)
    if c is None:
        state.step += 1
        return state
    ps, ns = sets
    cp, cn = c
    w = state.coords
    f_pos, d = _unit_toward(w[ps], cp)
    f_neg = -_unit_toward(w[ns], cn)[0]
    d_pos = float(d.mean())
    if cfg.trace_prob and state.rng.random() < cfg.trace_prob:
        state.trace.append((state.step, d_pos))
    if cfg.adaptive_lr:
        a_pos, a_neg = adaptive_rates(state, d_pos, state.n, cfg)
    else:
        a_pos = cfg.constant_lr
        a_neg = cfg.constant_lr if cfg.alpha_neg_constant is None else cfg.alpha_neg_constant
    state.last_rates = (a_pos, a_neg)
    beta = cfg.beta if cfg.leaking else 1.0
    w[ps] += (beta * a_pos) * f_pos
    w[ns] += (beta * a_neg) * f_neg
    if cfg.space_normalization:
        normalize_space(w)
    else:
        normalize_sphere(w)
    if record:
        state.avg.push(w)
    state.step += 1
    return state


def read_map(state: MapState, cfg: DynamicsConfig | None = None) -> np.ndarray:
    if cfg is not None and not cfg.moving_average:
        return state.coords.copy()
    return state.avg.mean()


def run(source, tau: int, state: MapState, cfg: DynamicsConfig) -> np.ndarray:
    """Run ``tau`` steps fed by ``source(rng) -> ps`` and return the averaged map.

    The state is mutated in place so it can keep learning on a later call.
    """
    state.avg.reset()
    start = tau - min(tau, cfg.movmean_window)
    n = state.n
    for t in range(tau):
        sets = select_activation(source(state.rng), n, state.rng, cfg.symmetric_activation)
        step(state, sets, cfg, record=t >= start)
    return read_map(state, cfg)


# --- checkpoints ---------------------------------------------------------------

_MAGIC = b"SMMAP1\0\0"


def save_checkpoint(state: MapState, path) -> None:
    """Binary: magic, uint32 header length, JSON header, float64 LE coords."""
    header = json.dumps({
        "n": state.n, "k": state.k, "step": state.step,
        "smoothed_rate": state.smoothed_rate,
        "rng": state.rng.bit_generator.state,
        "window": state.avg.window,
    }).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(state.coords.astype("<f8").tobytes())


def load_checkpoint(path, cfg: DynamicsConfig | None = None) -> MapState:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a map checkpoint")
        (hlen,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(hlen))
        n, k = meta["n"], meta["k"]
        coords = np.frombuffer(fh.read(8 * n * k), dtype="<f8").reshape(n, k).copy()
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng"]
    window = cfg.movmean_window if cfg else meta["window"]
    budget = cfg.memory_budget if cfg else DynamicsConfig.memory_budget
    avg = MovingAverage((n, k), window, budget)
    return MapState(coords, meta["smoothed_rate"], rng, avg, step=meta["step"])
