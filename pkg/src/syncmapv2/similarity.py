"""Patch similarity: DTW between reservoir trajectories, proximity and similarity lists."""
from __future__ import annotations

import hashlib
import os
import struct

import numpy as np


def _local_cost(a, b):
    # squared Euclidean between every state of a and every state of b
    diff = a[:, None, :] - b[None, :, :]
    return np.sum(diff * diff, axis=-1)


def _accumulate(cost):
    Ta, Tb = cost.shape
    acc = np.full((Ta + 1, Tb + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, Ta + 1):
        for j in range(1, Tb + 1):
            acc[i, j] = cost[i - 1, j - 1] + min(acc[i - 1, j], acc[i, j - 1], acc[i - 1, j - 1])
    return acc[Ta, Tb]


def _as_series(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("a time series must be 1-D or (T, d)")
    if x.shape[0] == 0:
        raise ValueError("empty time series")
    return x


def dtw_distance(a, b) -> float:
    """DTW between two (T, d) series.

    Local cost is the squared Euclidean distance between states, accumulated
    along the optimal path with unit steps; the square root of the total is
    returned (the convention of ``tslearn.metrics.dtw``).
    """
    a, b = _as_series(a), _as_series(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError("series must share the state dimension")
    return float(np.sqrt(_accumulate(_local_cost(a, b))))


def _dtw_batch(cost):
    """Accumulated DTW cost for a stack of (m, Ta, Tb) cost grids.

    Sweeps anti-diagonals so each step is vectorised over the stack and the
    diagonal.
    """
    m, Ta, Tb = cost.shape
    acc = np.full((m, Ta + 1, Tb + 1), np.inf)
    acc[:, 0, 0] = 0.0
    for s in range(2, Ta + Tb + 1):
        i = np.arange(max(1, s - Tb), min(Ta, s - 1) + 1)
        j = s - i
        best = np.minimum(np.minimum(acc[:, i - 1, j], acc[:, i, j - 1]), acc[:, i - 1, j - 1])
        acc[:, i, j] = cost[:, i - 1, j - 1] + best
    return acc[:, Ta, Tb]


def build_similarity_matrix(responses, block_pairs=2048) -> np.ndarray:
    """Symmetric matrix of pairwise DTW distances between (T, d) responses.

    Byte-identical responses are collapsed first so duplicates get an exact
    zero distance; squared distances between states come from Gram products.
    """
    X = np.asarray(responses, dtype=np.float64)
    if X.ndim != 3 or X.shape[0] < 2:
        raise ValueError("need at least two (T, d) responses")
    uniq, inverse = np.unique(X.reshape(X.shape[0], -1), axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    U = uniq.reshape(-1, X.shape[1], X.shape[2])
    m, T, _ = U.shape
    D = np.zeros((m, m))
    sq = np.einsum("ntd,ntd->nt", U, U)
    flat = U.reshape(m * T, -1)
    for i in range(m - 1):
        for lo in range(i + 1, m, block_pairs):
            hi = min(m, lo + block_pairs)
            G = U[i] @ flat[lo * T:hi * T].T  # (T, (hi-lo)*T)
            G = G.reshape(T, hi - lo, T).transpose(1, 0, 2)
            cost = sq[i][None, :, None] + sq[lo:hi][:, None, :] - 2.0 * G
            np.maximum(cost, 0.0, out=cost)
            D[i, lo:hi] = np.sqrt(_dtw_batch(cost))
    D = D + D.T
    return D[np.ix_(inverse, inverse)]


def top_similar(m, ref: int, count: int = 9) -> np.ndarray:
    """Reference patch first, then the nearest patches by ascending distance.

    Ties are broken by lower patch index.
    """
    row = np.asarray(m)[ref]
    n = row.shape[0]
    if not 0 <= ref < n:
        raise IndexError(ref)
    if count > n:
        raise ValueError("count exceeds patch count")
    others = np.delete(np.arange(n), ref)
    order = others[np.argsort(row[others], kind="stable")]
    return np.concatenate(([ref], order[:count - 1])).astype(np.intp)


def top_similar_all(m, count: int = 9) -> np.ndarray:
    """top_similar for every row at once -> (n, count)."""
    m = np.asarray(m)
    n = m.shape[0]
    keyed = m.copy()
    keyed[np.arange(n), np.arange(n)] = -np.inf
    order = np.argsort(keyed, axis=1, kind="stable")[:, :count]
    return order.astype(np.intp)


def proximity_neighbors(ref: int, rows: int, cols: int) -> np.ndarray:
    if not 0 <= ref < rows * cols:
        raise IndexError(ref)
    r, c = divmod(ref, cols)
    out = [ref]
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == dc == 0:
                continue
            rr, cc = r + dr, c + dc
            if 0 <= rr < rows and 0 <= cc < cols:
                out.append(rr * cols + cc)
    return np.array(out, dtype=np.intp)


# --- on-disk cache -----------------------------------------------------------

def cache_key(image: np.ndarray, esn_seed: int, extra: str = "") -> str:
    h = hashlib.sha256(np.ascontiguousarray(image, dtype=np.float64).tobytes())
    h.update(f"|{esn_seed}|{extra}".encode())
    return h.hexdigest()[:32]


def save_matrix(m, path) -> None:
    """n as little-endian uint32, then n*n little-endian float32."""
    m = np.asarray(m)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", m.shape[0]))
        fh.write(m.astype("<f4").tobytes())


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<I", fh.read(4))
        data = fh.read(4 * n * n)
    if len(data) != 4 * n * n:
        raise ValueError(f"{path}: truncated similarity matrix")
    return np.frombuffer(data, dtype="<f4").reshape(n, n).astype(np.float64)


def cached_similarity(responses, cache_dir, key) -> np.ndarray:
    """Return the float32-rounded similarity matrix, reading/writing ``cache_dir``."""
    if cache_dir is not None:
        path = os.path.join(cache_dir, f"{key}.sim")
        if os.path.exists(path):
            return load_matrix(path)
    m = build_similarity_matrix(responses).astype(np.float32).astype(np.float64)
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        save_matrix(m, path)
    return m
