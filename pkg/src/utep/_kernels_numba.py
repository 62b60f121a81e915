"""Numba-accelerated compute kernels.

Mirrors ``_kernels_numpy`` function for function. Matrix products go
through ``np.dot`` (BLAS, bit-identical to the numpy path); elementwise
ops are fused per-element loops, which is where the JIT actually wins.
Kernels are cached on disk so the compile cost is paid once per machine.
"""
from __future__ import annotations

import numpy as np
from numba import njit

BACKEND_NAME = "numba"

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def matmul(a, b):
    return np.dot(a, b)


@njit(**_JIT)
def matmul_nt(a, b):
    return np.dot(a, b.T)


@njit(**_JIT)
def matmul_tn(a, b):
    return np.dot(a.T, b)


@njit(**_JIT)
def relu_fwd(x):
    n, m = x.shape
    out = np.empty_like(x)
    for i in range(n):
        for j in range(m):
            v = x[i, j]
            out[i, j] = v if v > 0.0 else 0.0
    return out


@njit(**_JIT)
def relu_bwd(x, g):
    n, m = x.shape
    out = np.empty_like(x)
    for i in range(n):
        for j in range(m):
            out[i, j] = g[i, j] if x[i, j] > 0.0 else 0.0
    return out


@njit(**_JIT)
def sigmoid_fwd(x):
    n, m = x.shape
    out = np.empty_like(x)
    for i in range(n):
        for j in range(m):
            v = x[i, j]
            if v >= 0.0:
                out[i, j] = 1.0 / (1.0 + np.exp(-v))
            else:
                e = np.exp(v)
                out[i, j] = e / (1.0 + e)
    return out


@njit(**_JIT)
def sigmoid_bwd(y, g):
    n, m = y.shape
    out = np.empty_like(y)
    for i in range(n):
        for j in range(m):
            yy = y[i, j]
            out[i, j] = g[i, j] * yy * (1.0 - yy)
    return out


@njit(**_JIT)
def softmax_fwd(x):
    n, m = x.shape
    out = np.empty_like(x)
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, m):
            if x[i, j] > mx:
                mx = x[i, j]
        tot = 0.0
        for j in range(m):
            e = np.exp(x[i, j] - mx)
            out[i, j] = e
            tot += e
        for j in range(m):
            out[i, j] /= tot
    return out


@njit(**_JIT)
def softmax_bwd(y, g):
    n, m = y.shape
    out = np.empty_like(y)
    for i in range(n):
        dot = 0.0
        for j in range(m):
            dot += g[i, j] * y[i, j]
        for j in range(m):
            out[i, j] = y[i, j] * (g[i, j] - dot)
    return out


@njit(**_JIT)
def log_floor_fwd(x, floor):
    n, m = x.shape
    out = np.empty_like(x)
    for i in range(n):
        for j in range(m):
            v = x[i, j]
            out[i, j] = np.log(v if v > floor else floor)
    return out


@njit(**_JIT)
def log_floor_bwd(x, g, floor):
    n, m = x.shape
    out = np.empty_like(x)
    for i in range(n):
        for j in range(m):
            v = x[i, j]
            out[i, j] = g[i, j] / v if v > floor else 0.0
    return out


@njit(**_JIT)
def exp_fwd(x):
    n, m = x.shape
    out = np.empty_like(x)
    for i in range(n):
        for j in range(m):
            out[i, j] = np.exp(x[i, j])
    return out


@njit(**_JIT)
def dropout_scale(x, mask, keep):
    n, m = x.shape
    out = np.empty_like(x)
    for i in range(n):
        for j in range(m):
            out[i, j] = x[i, j] * (mask[i, j] / keep)
    return out


@njit(**_JIT)
def colsum(g):
    n, m = g.shape
    out = np.zeros((1, m), dtype=g.dtype)
    for i in range(n):
        for j in range(m):
            out[0, j] += g[i, j]
    return out


@njit(**_JIT)
def sgd_update(param, vel, grad, lr, momentum):
    # v <- momentum*v + g; theta <- theta - lr*v
    n, m = param.shape
    for i in range(n):
        for j in range(m):
            v = momentum * vel[i, j] + grad[i, j]
            vel[i, j] = v
            param[i, j] -= lr * v


def warmup() -> None:
    """Trigger JIT compilation of every kernel on tiny inputs."""
    a = np.ones((2, 3))
    b = np.ones((3, 2))
    matmul(a, b)
    matmul_nt(a, a)
    matmul_tn(a, a)
    relu_fwd(a)
    relu_bwd(a, a)
    sigmoid_fwd(a)
    sigmoid_bwd(sigmoid_fwd(a), a)
    softmax_fwd(a)
    softmax_bwd(softmax_fwd(a), a)
    log_floor_fwd(a, 1e-12)
    log_floor_bwd(a, a, 1e-12)
    exp_fwd(a)
    dropout_scale(a, np.ones_like(a), 0.5)
    colsum(a)
    sgd_update(a.copy(), np.zeros_like(a), a, 0.1, 0.9)
