"""Training objectives.

The total objective is L_adv + alpha_bias * L_bias + alpha_tce * L_tce,
where L_adv = L_y + alpha_adv * (weighted domain log-loss), L_bias is
the squared L2 norm of the batch variance vector, and L_tce combines the
positive and negative pseudo-label cluster losses. The uncertainty
weights (1 + mu) and s enter as detached constants; parts that are
disabled are simply never built, so a run with everything off produces
the exact same graph as the plain adversarial baseline.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndgrad as nd
from .errors import ConfigError, ShapeError
from .ndgrad import Node

LOG_FLOOR = 1e-12


@dataclass
class LossReport:
    """Scalar values of every objective part for one step.

    Satisfies L_tce = L_pce + alpha_nce * L_nce and
    L_total = L_adv + alpha_bias * L_bias + alpha_tce * L_tce exactly
    (same float operations as the graph assembly).
    """
    L_y: float
    L_adv_domain: float
    L_adv: float
    L_bias: float
    L_pce: float
    L_nce: float
    L_tce: float
    L_total: float
    alpha_adv: float
    alpha_nce: float
    alpha_bias: float
    alpha_tce: float


def _col(vec: np.ndarray, n: int, who: str) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float64).reshape(-1, 1)
    if arr.shape[0] != n:
        raise ShapeError(f"{who}: weight length {arr.shape[0]} vs batch {n}")
    return arr


def loss_classifier(g: Node, y: np.ndarray,
                    sample_weights: np.ndarray | None = None) -> Node:
    """Weighted mean of -log g[y] over the batch (log clamped at 1e-12)."""
    n, C = g.value.shape
    if n == 0:
        raise ShapeError(f"loss_classifier: empty batch, g shape {g.value.shape}")
    y = np.asarray(y)
    if y.shape != (n,):
        raise ShapeError(f"loss_classifier: labels shape {y.shape} vs batch ({n},)")
    if y.min() < 0 or y.max() >= C:
        raise ConfigError(f"loss_classifier: label outside [0, {C}): "
                          f"min {y.min()}, max {y.max()}")
    onehot = np.zeros((n, C))
    onehot[np.arange(n), y.astype(np.int64)] = 1.0
    picked = nd.sum(nd.mul(nd.log(g, floor=LOG_FLOOR), nd.const(onehot)), axis=1)
    if sample_weights is not None:
        picked = nd.mul(picked, nd.const(_col(sample_weights, n, "loss_classifier")))
    return nd.scale(nd.sum(picked), -1.0 / n)


def loss_adversarial_weighted(p_src: Node, p_tgt: Node,
                              mu_src: np.ndarray, mu_tgt: np.ndarray) -> Node:
    """Domain log-loss with (1 + mu) per-sample weights.

    mean_src (1+mu)(-log p) + mean_tgt (1+mu)(-log(1-p)). mu entries are
    detached weights in [0, 1]; zeros reduce this to the unweighted loss.
    """
    ns = p_src.value.shape[0]
    nt = p_tgt.value.shape[0]
    if ns == 0 or nt == 0:
        raise ShapeError("loss_adversarial_weighted: both domains required, got "
                         f"source batch {p_src.value.shape} and "
                         f"target batch {p_tgt.value.shape}")
    if p_src.value.shape[1] != 1 or p_tgt.value.shape[1] != 1:
        raise ShapeError("loss_adversarial_weighted: expected (n, 1) columns, got "
                         f"{p_src.value.shape} and {p_tgt.value.shape}")
    ws = _col(mu_src, ns, "loss_adversarial_weighted")
    wt = _col(mu_tgt, nt, "loss_adversarial_weighted")
    for m in (ws, wt):
        if m.min() < 0.0 or m.max() > 1.0:
            raise ConfigError("loss_adversarial_weighted: mu weights must lie "
                              f"in [0, 1], got range [{m.min()}, {m.max()}]")
    src_term = nd.mul(nd.log(p_src, floor=LOG_FLOOR), nd.const(1.0 + ws))
    one_minus = nd.add(nd.const(np.ones((nt, 1))), nd.scale(p_tgt, -1.0))
    tgt_term = nd.mul(nd.log(one_minus, floor=LOG_FLOOR), nd.const(1.0 + wt))
    return nd.add(nd.scale(nd.mean(src_term), -1.0),
                  nd.scale(nd.mean(tgt_term), -1.0))


def loss_bias(u: Node) -> Node:
    """Squared L2 norm of the batch variance vector: sum of u_i^2."""
    if u.value.shape[1] != 1:
        raise ShapeError(f"loss_bias: expected (n, 1) variances, got {u.value.shape}")
    return nd.sum(nd.square(u))


def loss_pce(g: Node, h: np.ndarray, s: np.ndarray) -> Node:
    """Positive cluster loss: mean of s_i * sum_c h[c] * (-g[c] log g[c])."""
    n, C = g.value.shape
    if n == 0:
        return nd.const(np.zeros((1, 1)))
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (n, C):
        raise ShapeError(f"loss_pce: mask shape {h.shape} vs g {g.value.shape}")
    ent = nd.mul(nd.mul(g, nd.log(g, floor=LOG_FLOOR)), nd.const(h))
    rows = nd.mul(nd.sum(ent, axis=1), nd.const(_col(s, n, "loss_pce")))
    return nd.scale(nd.sum(rows), -1.0 / n)


def loss_nce(g: Node, l: np.ndarray, s: np.ndarray) -> Node:
    """Negative cluster loss: mean of s_i * sum_c l[c] * (-(1-g) log(1-g))."""
    n, C = g.value.shape
    if n == 0:
        return nd.const(np.zeros((1, 1)))
    l = np.asarray(l, dtype=np.float64)
    if l.shape != (n, C):
        raise ShapeError(f"loss_nce: mask shape {l.shape} vs g {g.value.shape}")
    one_minus = nd.add(nd.const(np.ones((n, C))), nd.scale(g, -1.0))
    ent = nd.mul(nd.mul(one_minus, nd.log(one_minus, floor=LOG_FLOOR)), nd.const(l))
    rows = nd.mul(nd.sum(ent, axis=1), nd.const(_col(s, n, "loss_nce")))
    return nd.scale(nd.sum(rows), -1.0 / n)


def combine_tce(l_pce: Node | None, l_nce: Node | None, alpha_nce: float) -> Node | None:
    """L_tce = L_pce + alpha_nce * L_nce; either part may be absent."""
    if alpha_nce < 0.0:
        raise ConfigError(f"alpha_nce must be >= 0, got {alpha_nce}")
    if l_pce is None and l_nce is None:
        return None
    if l_nce is None:
        return l_pce
    scaled = nd.scale(l_nce, alpha_nce)
    return scaled if l_pce is None else nd.add(l_pce, scaled)


def loss_total(l_adv: Node, l_bias: Node | None, l_tce: Node | None,
               alpha_bias: float, alpha_tce: float) -> Node:
    """L_total = L_adv + alpha_bias * L_bias + alpha_tce * L_tce.

    Absent parts contribute nothing to the graph, so disabling them
    reproduces the plain adversarial objective bit for bit.
    """
    if alpha_bias < 0.0 or alpha_tce < 0.0:
        raise ConfigError(f"loss weights must be >= 0, got alpha_bias={alpha_bias} "
                          f"alpha_tce={alpha_tce}")
    total = l_adv
    if l_bias is not None:
        total = nd.add(total, nd.scale(l_bias, alpha_bias))
    if l_tce is not None:
        total = nd.add(total, nd.scale(l_tce, alpha_tce))
    return total


def assemble_adversarial(l_y: Node, l_domain: Node | None, alpha_adv: float) -> Node:
    """L_adv = L_y + alpha_adv * domain log-loss (domain part optional)."""
    if alpha_adv < 0.0:
        raise ConfigError(f"alpha_adv must be >= 0, got {alpha_adv}")
    if l_domain is None:
        return l_y
    return nd.add(l_y, nd.scale(l_domain, alpha_adv))


def build_report(l_y: float, l_domain: float, l_bias: float, l_pce: float,
                 l_nce: float, alpha_adv: float, alpha_nce: float,
                 alpha_bias: float, alpha_tce: float) -> LossReport:
    """Recompute the exact combination identities from the part values."""
    # +0.0 folds negative zero from empty selections into plain zero
    l_y, l_domain, l_bias = l_y + 0.0, l_domain + 0.0, l_bias + 0.0
    l_pce, l_nce = l_pce + 0.0, l_nce + 0.0
    l_adv = l_y + alpha_adv * l_domain
    l_tce = l_pce + alpha_nce * l_nce
    l_total = l_adv + alpha_bias * l_bias + alpha_tce * l_tce
    return LossReport(L_y=l_y, L_adv_domain=l_domain, L_adv=l_adv, L_bias=l_bias,
                      L_pce=l_pce, L_nce=l_nce, L_tce=l_tce, L_total=l_total,
                      alpha_adv=alpha_adv, alpha_nce=alpha_nce,
                      alpha_bias=alpha_bias, alpha_tce=alpha_tce)
