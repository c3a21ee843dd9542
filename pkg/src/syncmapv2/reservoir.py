"""Echo state network used as a fixed random feature generator.

No readout is trained: each patch sequence is driven through the reservoir and
the full trajectory of states is returned.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np


class InitializationError(RuntimeError):
    pass


class ConvergenceError(ArithmeticError):
    """Power iteration hit its cap; ``estimate`` holds the last value."""

    def __init__(self, msg, estimate):
        super().__init__(msg)
        self.estimate = estimate


@dataclass(frozen=True)
class EsnParams:
    n_neurons: int = 512
    input_dim: int = 18
    spectral_radius: float = 1.1
    sparsity: float = 0.9
    leak: float = 0.5
    input_scaling: float = 1.0
    weight_scaling: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.n_neurons < 1 or self.input_dim < 1:
            raise ValueError("n_neurons and input_dim must be positive")
        if not 0 <= self.sparsity < 1:
            raise ValueError("sparsity must lie in [0, 1)")
        if not 0 < self.leak <= 1:
            raise ValueError("leak must lie in (0, 1]")
        if self.spectral_radius <= 0:
            raise ValueError("spectral_radius must be positive")


@dataclass(frozen=True)
class EsnWeights:
    W_in: np.ndarray
    W: np.ndarray
    params: EsnParams


def spectral_radius(W, tol=1e-9, max_iter=10_000, block=8, seed=0):
    """Largest |eigenvalue| of a square matrix by block power iteration.

    A plain single-vector power iteration stalls when the dominant eigenvalues
    form a complex-conjugate pair (the usual case for random non-symmetric
    matrices), so a small orthonormal block is iterated instead and the
    eigenvalues of its Rayleigh-Ritz projection are read off.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("W must be square")
    n = W.shape[0]
    if n == 0:
        return 0.0
    if n <= block:
        return float(np.max(np.abs(np.linalg.eigvals(W))))
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, block)))
    est = np.nan
    for _ in range(max_iter):
        Z = W @ Q
        vals, vecs = np.linalg.eig(Q.T @ Z)
        top = int(np.argmax(np.abs(vals)))
        est = float(abs(vals[top]))
        if est == 0.0:
            return 0.0
        # Ritz residual of the dominant pair
        v = Q @ vecs[:, top]
        resid = np.linalg.norm(Z @ vecs[:, top] - vals[top] * v) / np.linalg.norm(v)
        if resid <= tol * est:
            return est
        Q, _ = np.linalg.qr(Z)
        if not np.all(np.isfinite(Q)):
            break
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps", est)


def init_esn(params: EsnParams) -> EsnWeights:
    rng = np.random.default_rng(params.seed)
    n, m = params.n_neurons, params.input_dim
    W_in = rng.standard_normal((n, m)) * params.input_scaling
    W = rng.standard_normal((n, n)) * params.weight_scaling
    n_zero = int(round(params.sparsity * n * n))
    W.flat[rng.permutation(n * n)[:n_zero]] = 0.0
    if not W.any():
        raise InitializationError("recurrent matrix is all zero after sparsification")
    rho = spectral_radius(W)
    if rho == 0:
        raise InitializationError("recurrent matrix is nilpotent")
    W *= params.spectral_radius / rho
    W_in.setflags(write=False)
    W.setflags(write=False)
    return EsnWeights(W_in, W, params)


def esn_step(weights: EsnWeights, state, u, leak):
    x_tilde = np.tanh(weights.W_in @ u + weights.W @ state)
    return (1.0 - leak) * state + leak * x_tilde


def run_patch(weights: EsnWeights, seq, leak=None) -> np.ndarray:
    """Drive one (T, N_u) sequence from the zero state; returns (T, N_x)."""
    return run_patches(weights, np.asarray(seq)[None], leak)[0]


def run_patches(weights: EsnWeights, seqs, leak=None, chunk=4096) -> np.ndarray:
    """Batched run_patch over (n, T, N_u) sequences -> (n, T, N_x)."""
    seqs = np.asarray(seqs, dtype=np.float64)
    if seqs.shape[-1] != weights.W_in.shape[1]:
        raise ValueError(
            f"sequence dim {seqs.shape[-1]} != reservoir input dim {weights.W_in.shape[1]}")
    leak = weights.params.leak if leak is None else leak
    n, T, _ = seqs.shape
    out = np.empty((n, T, weights.W.shape[0]))
    for lo in range(0, n, chunk):
        batch = seqs[lo:lo + chunk]
        drive = batch @ weights.W_in.T  # (b, T, N_x)
        x = np.zeros((batch.shape[0], weights.W.shape[0]))
        for t in range(T):
            x = (1.0 - leak) * x + leak * np.tanh(drive[:, t] + x @ weights.W.T)
            out[lo:lo + chunk, t] = x
    return out


_MAGIC = b"SMESN1\0\0"


def save_weights(weights: EsnWeights, path) -> None:
    """Little-endian binary: magic, header length, JSON header, W_in, W (float64)."""
    header = json.dumps(asdict(weights.params), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(weights.W_in.astype("<f8").tobytes())
        fh.write(weights.W.astype("<f8").tobytes())


def load_weights(path) -> EsnWeights:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not an ESN weight file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        params = EsnParams(**json.loads(fh.read(hlen)))
        n, m = params.n_neurons, params.input_dim
        W_in = np.frombuffer(fh.read(8 * n * m), dtype="<f8").reshape(n, m).astype(np.float64)
        W = np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n).astype(np.float64)
    W_in.setflags(write=False)
    W.setflags(write=False)
    return EsnWeights(W_in, W, params)
