"""Pure-numpy compute kernels.

Reference implementations for every hot kernel. The numba backend in
``_kernels_numba`` mirrors this module function for function; `backend`
picks one of the two at import time.
"""
from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b


def matmul_nt(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a @ b.T"""
    return a @ b.T


def matmul_tn(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a.T @ b"""
    return a.T @ b


def relu_fwd(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_bwd(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # subgradient 0 at exactly x == 0
    return np.where(x > 0.0, g, 0.0)


def sigmoid_fwd(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_bwd(y: np.ndarray, g: np.ndarray) -> np.ndarray:
    return g * y * (1.0 - y)


def softmax_fwd(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(y: np.ndarray, g: np.ndarray) -> np.ndarray:
    dot = (g * y).sum(axis=1, keepdims=True)
    return y * (g - dot)


def log_floor_fwd(x: np.ndarray, floor: float) -> np.ndarray:
    return np.log(np.maximum(x, floor))


def log_floor_bwd(x: np.ndarray, g: np.ndarray, floor: float) -> np.ndarray:
    # clamped entries are constants, so their gradient is zero
    return np.where(x > floor, g / np.maximum(x, floor), 0.0)


def exp_fwd(x: np.ndarray) -> np.ndarray:
    return np.exp(x)


def dropout_scale(x: np.ndarray, mask: np.ndarray, keep: float) -> np.ndarray:
    return x * (mask / keep)


def colsum(g: np.ndarray) -> np.ndarray:
    return g.sum(axis=0, keepdims=True)


def sgd_update(param: np.ndarray, vel: np.ndarray, grad: np.ndarray,
               lr: float, momentum: float) -> None:
    # v <- momentum*v + g; theta <- theta - lr*v
    vel *= momentum
    vel += grad
    param -= lr * vel
