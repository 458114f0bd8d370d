"""Dense float64 kernel: affine maps, activations and least squares.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RELU, SATLIN, SOFTMAX, IDENTITY = "relu", "satlin", "softmax_row", "identity"


class DimensionError(ValueError):
    code = "dimension-mismatch"


class RankDeficientError(np.linalg.LinAlgError):
    code = "rank-deficient-system"


@dataclass(frozen=True)
class Activation:
    kind: str = IDENTITY
    gain: float = 1.0  # only used by softmax_row

    def __post_init__(self):
        if self.kind not in (RELU, SATLIN, SOFTMAX, IDENTITY):
            raise ValueError(f"unknown activation {self.kind!r}")
        if self.kind == SOFTMAX and not self.gain > 0:
            raise ValueError("softmax gain must be positive")

    def __call__(self, x):
        return activate(self, x)


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


def affine(W, b, x) -> np.ndarray:
    """``W @ x + b`` in float64."""
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.ndim != 2 or x.shape != (W.shape[1],) or b.shape != (W.shape[0],):
        raise DimensionError(
            f"affine: W {W.shape}, b {b.shape}, x {x.shape} are incompatible"
        )
    return W @ x + b


def softmax(x, gain=1.0) -> np.ndarray:
    z = gain * np.asarray(x, dtype=np.float64)
    z = np.exp(z - z.max())
    return z / z.sum()


def activate(a: Activation, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if a.kind == RELU:
        return np.maximum(x, 0.0)
    if a.kind == SATLIN:
        return np.clip(x, 0.0, 1.0)
    if a.kind == SOFTMAX:
        return softmax(x, a.gain)
    return x


def lstsq(A, B, rcond=1e-10):
    """Minimise ``||A X - B||_F``; returns ``(X, residual_norm)``.

    Uses the SVD-based LAPACK driver, so rank is read off the singular values
    and a rank-deficient ``A`` is rejected rather than silently regularised.
    """
    A, B = as_matrix(A), as_matrix(B)
    if A.shape[0] != B.shape[0]:
        raise DimensionError(f"lstsq: A {A.shape} and B {B.shape} row counts differ")
    X, _, rank, sv = np.linalg.lstsq(A, B, rcond=rcond)
    if rank < A.shape[1]:
        raise RankDeficientError(f"rank {rank} < {A.shape[1]} columns")
    residual = float(np.linalg.norm(A @ X - B))
    return X, residual
