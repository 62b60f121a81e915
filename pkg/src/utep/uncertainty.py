"""Per-sample discriminator uncertainty from MC-dropout variance.

u(x) is the population variance of K stochastic discriminator outputs
(divisor K). The batch vector U is min-max normalized into the
transferability weight mu with denominator max(U), deliberately not
max - min; s = 1 - mu is the selection weight for pseudo-label losses.
mu and s are plain arrays (no gradient); only the bias loss
differentiates through the variance, via ``mc_variance_node``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import reduce

import numpy as np

from . import ndgrad as nd
from .errors import ConfigError, ShapeError
from .ndgrad import Node, RngStream
from .nets import ModelBundle, forward_discriminator

log = logging.getLogger("utep.uncertainty")

EPS_VAR = 1e-12


def mc_variance_node(bundle: ModelBundle, features: Node, K: int,
                     rng: RngStream | None = None,
                     masks: list[np.ndarray] | None = None) -> Node:
    """Differentiable (n, 1) node of per-sample MC output variances.

    Runs K train-mode discriminator passes (no gradient reversal) over
    the shared ``features`` node and builds the population variance
    u_i = (1/K) sum_k (p_ik - mean_i)^2 inside the graph. Masks may be
    passed explicitly to freeze the stochasticity (gradient checks).
    """
    if K < 2:
        raise ConfigError(f"mc_variance needs K >= 2 passes, got {K}")
    n = features.value.shape[0]
    if bundle.dropout_rate == 0.0:
        log.warning("mc_variance: dropout rate is 0, variance degenerates to 0")
        return nd.const(np.zeros((n, 1)))
    if masks is not None and len(masks) != K:
        raise ShapeError(f"mc_variance: {len(masks)} masks for K={K} passes")
    passes = []
    for k in range(K):
        mask = masks[k] if masks is not None else None
        passes.append(forward_discriminator(bundle, features, mask=mask,
                                            rng=rng, train=True, grl=False))
    mean = nd.scale(reduce(nd.add, passes), 1.0 / K)
    neg_mean = nd.scale(mean, -1.0)
    devs = [nd.square(nd.add(p, neg_mean)) for p in passes]
    return nd.scale(reduce(nd.add, devs), 1.0 / K)


def mc_variance(bundle: ModelBundle, features, K: int,
                rng: RngStream | None = None) -> np.ndarray:
    """Detached per-sample variance vector (n,) of K MC passes."""
    node = features if isinstance(features, Node) else nd.const(features)
    u = mc_variance_node(bundle, node, K, rng)
    return u.value[:, 0].copy()


def normalize_mu(U: np.ndarray) -> np.ndarray:
    """mu_i = (U_i - min(U)) / max(U); zero vector when max(U) <= eps.

    The denominator is max(U), not max - min, so mu only reaches 1 when
    min(U) = 0.
    """
    U = np.asarray(U, dtype=np.float64)
    if U.size == 0:
        raise ShapeError(f"normalize_mu: empty batch vector, shape {U.shape}")
    if np.any(U < 0.0):
        raise ShapeError("normalize_mu: variances must be nonnegative")
    mx = U.max()
    if mx <= EPS_VAR:
        return np.zeros_like(U)
    return (U - U.min()) / mx


def selection_weight(mu: np.ndarray) -> np.ndarray:
    """s = 1 - mu elementwise."""
    return 1.0 - np.asarray(mu, dtype=np.float64)


@dataclass
class UncertaintyRecord:
    """Batch snapshot of u, mu, s plus the pass count and domain flags."""
    u: np.ndarray
    mu: np.ndarray
    s: np.ndarray
    K: int
    domain: np.ndarray

    @classmethod
    def from_variances(cls, u: np.ndarray, domain: np.ndarray,
                       K: int) -> "UncertaintyRecord":
        mu = normalize_mu(u)
        return cls(u=u, mu=mu, s=selection_weight(mu), K=K,
                   domain=np.asarray(domain))

    def rows(self) -> list[tuple]:
        """(sample_id, domain, u, mu, s) tuples for CSV dumps."""
        return [(i, int(self.domain[i]), float(self.u[i]),
                 float(self.mu[i]), float(self.s[i]))
                for i in range(len(self.u))]
