"""Reverse-mode automatic differentiation over dense 2-D float64 arrays.

Small fixed op set, explicit graph, additive gradient accumulation.
Every value in the graph is a 2-D array; scalars live as shape (1, 1).
Broadcasting is deliberately restricted to row-vector bias addition,
everything else must match shapes exactly.
"""
from __future__ import annotations

import hashlib
from typing import Callable, Sequence

import numpy as np

from . import backend as K
from .errors import NonFiniteError, ShapeError

_VALIDATE = True


def set_validation(on: bool) -> None:
    """Toggle finite-value checks on op outputs (on by default)."""
    global _VALIDATE
    _VALIDATE = bool(on)


def validation_enabled() -> bool:
    return _VALIDATE


def _checked(arr: np.ndarray, op: str) -> np.ndarray:
    if _VALIDATE and not np.isfinite(arr).all():
        raise NonFiniteError(f"{op}: produced a non-finite value")
    return arr


class Node:
    """One vertex of the computation graph.

    ``value`` is a 2-D float64 array, ``grad`` accumulates additively
    during backward, ``parents`` are the input nodes, and ``_backward``
    is a closure routing this node's grad to its parents.
    """

    __slots__ = ("value", "grad", "parents", "op", "requires_grad", "_backward")

    def __init__(self, value: np.ndarray, parents: tuple = (), op: str = "leaf",
                 requires_grad: bool = False):
        self.value = value
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.op = op
        self.requires_grad = requires_grad
        self._backward: Callable[[np.ndarray], None] | None = None

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ShapeError(f"item: needs shape (1, 1), got {self.value.shape}")
        return float(self.value[0, 0])

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(op={self.op}, shape={self.value.shape}, rg={self.requires_grad})"


def _as_matrix(x, who: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"{who}: needs a 2-D array, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def const(x) -> Node:
    """Leaf node that never receives a gradient."""
    return Node(_checked(_as_matrix(x, "const"), "const"), op="const")


def param(x) -> Node:
    """Trainable leaf node; copies its input."""
    arr = _as_matrix(x, "param").copy()
    return Node(_checked(arr, "param"), op="param", requires_grad=True)


def _accum(node: Node, g: np.ndarray) -> None:
    if node.grad is None:
        node.grad = g.copy()
    else:
        node.grad += g


def zero_grad(nodes: Sequence[Node]) -> None:
    for n in nodes:
        n.grad = None


# ---------------------------------------------------------------- ops

def matmul(a: Node, b: Node) -> Node:
    va, vb = a.value, b.value
    if va.shape[1] != vb.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {va.shape} @ {vb.shape}")
    out = Node(_checked(K.matmul(va, vb), "matmul"), (a, b), "matmul",
               a.requires_grad or b.requires_grad)
    if out.requires_grad:
        def _bwd(g):
            if a.requires_grad:
                _accum(a, K.matmul_nt(g, vb))
            if b.requires_grad:
                _accum(b, K.matmul_tn(va, g))
        out._backward = _bwd
    return out


def add(a: Node, b: Node) -> Node:
    va, vb = a.value, b.value
    if va.shape == vb.shape:
        bias = False
    elif vb.shape == (1, va.shape[1]):
        bias = True
    else:
        raise ShapeError(f"add: shapes {va.shape} and {vb.shape} are incompatible "
                         "(only equal shapes or a (1, m) row bias are allowed)")
    out = Node(_checked(va + vb, "add"), (a, b), "add",
               a.requires_grad or b.requires_grad)
    if out.requires_grad:
        def _bwd(g):
            if a.requires_grad:
                _accum(a, g)
            if b.requires_grad:
                _accum(b, K.colsum(g) if bias else g)
        out._backward = _bwd
    return out


def mul(a: Node, b: Node) -> Node:
    """Elementwise product; shapes must match exactly."""
    va, vb = a.value, b.value
    if va.shape != vb.shape:
        raise ShapeError(f"mul: shapes {va.shape} and {vb.shape} differ")
    out = Node(_checked(va * vb, "mul"), (a, b), "mul",
               a.requires_grad or b.requires_grad)
    if out.requires_grad:
        def _bwd(g):
            if a.requires_grad:
                _accum(a, g * vb)
            if b.requires_grad:
                _accum(b, g * va)
        out._backward = _bwd
    return out


def scale(a: Node, c: float) -> Node:
    c = float(c)
    if not np.isfinite(c):
        raise NonFiniteError(f"scale: factor {c} is not finite")
    out = Node(_checked(a.value * c, "scale"), (a,), "scale", a.requires_grad)
    if out.requires_grad:
        def _bwd(g):
            _accum(a, g * c)
        out._backward = _bwd
    return out


def relu(a: Node) -> Node:
    va = a.value
    out = Node(_checked(K.relu_fwd(va), "relu"), (a,), "relu", a.requires_grad)
    if out.requires_grad:
        def _bwd(g):
            _accum(a, K.relu_bwd(va, g))
        out._backward = _bwd
    return out


def sigmoid(a: Node) -> Node:
    y = _checked(K.sigmoid_fwd(a.value), "sigmoid")
    out = Node(y, (a,), "sigmoid", a.requires_grad)
    if out.requires_grad:
        def _bwd(g):
            _accum(a, K.sigmoid_bwd(y, g))
        out._backward = _bwd
    return out


def softmax(a: Node) -> Node:
    """Row-wise softmax; each row of the output sums to one."""
    y = _checked(K.softmax_fwd(a.value), "softmax")
    out = Node(y, (a,), "softmax", a.requires_grad)
    if out.requires_grad:
        def _bwd(g):
            _accum(a, K.softmax_bwd(y, g))
        out._backward = _bwd
    return out


def log(a: Node, floor: float | None = None) -> Node:
    """Natural log, optionally clamping inputs below ``floor`` first.

    Clamped entries are treated as constants: their gradient is zero.
    """
    f = 0.0 if floor is None else float(floor)
    va = a.value
    out = Node(_checked(K.log_floor_fwd(va, f), "log"), (a,), "log", a.requires_grad)
    if out.requires_grad:
        def _bwd(g):
            _accum(a, K.log_floor_bwd(va, g, f))
        out._backward = _bwd
    return out


def exp(a: Node) -> Node:
    va = a.value
    y = _checked(K.exp_fwd(va), "exp")
    out = Node(y, (a,), "exp", a.requires_grad)
    if out.requires_grad:
        def _bwd(g):
            _accum(a, g * y)
        out._backward = _bwd
    return out


def square(a: Node) -> Node:
    va = a.value
    out = Node(_checked(va * va, "square"), (a,), "square", a.requires_grad)
    if out.requires_grad:
        def _bwd(g):
            _accum(a, 2.0 * va * g)
        out._backward = _bwd
    return out


def _reduce(a: Node, axis: int | None, op: str, divide: bool) -> Node:
    va = a.value
    n, m = va.shape
    if axis is None:
        count = va.size
        val = np.array([[va.sum()]])
    elif axis == 0:
        count = n
        val = va.sum(axis=0, keepdims=True)
    elif axis == 1:
        count = m
        val = va.sum(axis=1, keepdims=True)
    else:
        raise ShapeError(f"{op}: axis must be None, 0 or 1, got {axis}")
    if divide:
        if count == 0:
            raise ShapeError(f"{op}: cannot average over an empty axis of {va.shape}")
        val = val / count
    out = Node(_checked(val, op), (a,), op, a.requires_grad)
    if out.requires_grad:
        k = (1.0 / count) if divide else 1.0

        def _bwd(g):
            _accum(a, np.broadcast_to(g * k, va.shape))
        out._backward = _bwd
    return out


def sum(a: Node, axis: int | None = None) -> Node:  # noqa: A001
    return _reduce(a, axis, "sum", divide=False)


def mean(a: Node, axis: int | None = None) -> Node:
    return _reduce(a, axis, "mean", divide=True)


def concat(nodes: Sequence[Node], axis: int = 0) -> Node:
    if len(nodes) == 0:
        raise ShapeError("concat: needs at least one node")
    if axis not in (0, 1):
        raise ShapeError(f"concat: axis must be 0 or 1, got {axis}")
    vals = [n.value for n in nodes]
    other = 1 - axis
    base = vals[0].shape[other]
    for v in vals[1:]:
        if v.shape[other] != base:
            raise ShapeError(f"concat: shapes {vals[0].shape} and {v.shape} "
                             f"disagree on axis {other}")
    val = np.concatenate(vals, axis=axis)
    rg = any(n.requires_grad for n in nodes)
    out = Node(_checked(val, "concat"), tuple(nodes), "concat", rg)
    if rg:
        sizes = [v.shape[axis] for v in vals]

        def _bwd(g):
            ofs = 0
            for node, size in zip(nodes, sizes):
                if node.requires_grad:
                    piece = g[ofs:ofs + size] if axis == 0 else g[:, ofs:ofs + size]
                    _accum(node, piece)
                ofs += size
        out._backward = _bwd
    return out


def dropout(a: Node, mask: np.ndarray, rate: float) -> Node:
    """Inverted dropout with a caller-supplied {0, 1} mask.

    Kept entries are scaled by 1 / (1 - rate) so eval needs no rescale.
    """
    rate = float(rate)
    if not 0.0 <= rate < 1.0:
        raise ShapeError(f"dropout: rate must be in [0, 1), got {rate}")
    if mask.shape != a.value.shape:
        raise ShapeError(f"dropout: mask shape {mask.shape} does not match "
                         f"input shape {a.value.shape}")
    keep = 1.0 - rate
    out = Node(_checked(K.dropout_scale(a.value, mask, keep), "dropout"),
               (a,), "dropout", a.requires_grad)
    if out.requires_grad:
        def _bwd(g):
            _accum(a, K.dropout_scale(g, mask, keep))
        out._backward = _bwd
    return out


def gradient_reverse(a: Node, lam: float) -> Node:
    """Identity on the forward pass; multiplies the gradient by -lam."""
    lam = float(lam)
    if not np.isfinite(lam):
        raise NonFiniteError(f"gradient_reverse: lambda {lam} is not finite")
    out = Node(a.value, (a,), "gradient_reverse", a.requires_grad)
    if out.requires_grad:
        def _bwd(g):
            _accum(a, g * (-lam))
        out._backward = _bwd
    return out


# ----------------------------------------------------------- backward

def _topo_order(out: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(out: Node, seed: np.ndarray | None = None) -> None:
    """Accumulate d(out)/d(node) into ``grad`` across the whole graph.

    Without an explicit seed the output must be scalar shaped (1, 1).
    Gradients add up across calls; use ``zero_grad`` between steps.
    """
    if seed is None:
        if out.value.shape != (1, 1):
            raise ShapeError(f"backward: output shape {out.value.shape} is not "
                             "scalar (1, 1); pass an explicit seed")
        seed = np.ones((1, 1))
    elif seed.shape != out.value.shape:
        raise ShapeError(f"backward: seed shape {seed.shape} does not match "
                         f"output shape {out.value.shape}")
    _accum(out, seed)
    for node in reversed(_topo_order(out)):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------- gradcheck

def gradcheck(fn: Callable[[], Node], params: Sequence[Node],
              step: float = 1e-5) -> float:
    """Compare analytic gradients against central differences.

    ``fn`` rebuilds the scalar loss from the live ``params`` on every
    call. Returns the worst relative error
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    out = fn()
    if out.value.shape != (1, 1):
        raise ShapeError(f"gradcheck: fn output shape {out.value.shape} "
                         "is not scalar (1, 1)")
    zero_grad(params)
    backward(out)
    analytic = [np.zeros_like(p.value) if p.grad is None else p.grad.copy()
                for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        for idx in np.ndindex(p.value.shape):
            orig = p.value[idx]
            p.value[idx] = orig + step
            f_plus = fn().item()
            p.value[idx] = orig - step
            f_minus = fn().item()
            p.value[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(ga[idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst


# -------------------------------------------------------- rng streams

class RngStream:
    """Deterministic PCG64 stream addressed by (seed, name).

    Substreams derived via ``spawn`` are independent of draw order on
    the parent: the child state depends only on the seed and the name
    path, so adding draws to one stream never shifts another.
    """

    def __init__(self, seed: int, name: str = "root"):
        self.seed = int(seed)
        self.name = name
        self._gen = np.random.Generator(np.random.PCG64(self._mix(self.seed, name)))

    @staticmethod
    def _mix(seed: int, name: str) -> int:
        digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
        return int.from_bytes(digest[:16], "little")

    def spawn(self, name: str) -> "RngStream":
        return RngStream(self.seed, f"{self.name}/{name}")

    def normal(self, shape, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def random(self, shape) -> np.ndarray:
        return self._gen.random(size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def keep_mask(self, shape, rate: float) -> np.ndarray:
        """Float {0, 1} dropout mask; each entry survives with prob 1 - rate."""
        return (self._gen.random(size=shape) >= rate).astype(np.float64)
