"""Discrepancy and density-ratio diagnostics.

The proxy A-distance trains a fresh logistic probe on frozen features
and maps its held-out error to 2(1 - 2 eps), floored at 0. The density
ratio inverts the discriminator output p into (1 - p)/p, clamped to a
bound. ``fit_domain_classifier`` trains a plain (non-adversarial)
domain classifier so ratio quality can be judged at convergence.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import ndgrad as nd
from .errors import ShapeError
from .losses import loss_adversarial_weighted
from .ndgrad import RngStream
from .nets import ModelBundle, forward_discriminator, forward_features
from .synthdata import DomainPair

DEFAULT_RATIO_BOUND = 100.0


@dataclass
class RatioEstimate:
    """Per-sample density-ratio estimates and the clamp bound used."""
    w_hat: np.ndarray
    bound: float


def density_ratio(bundle: ModelBundle, x: np.ndarray,
                  bound: float = DEFAULT_RATIO_BOUND) -> np.ndarray:
    """w_hat = (1 - p)/p from the eval-mode discriminator, clamped to [0, bound]."""
    f = forward_features(bundle, x)
    p = forward_discriminator(bundle, f, train=False).value[:, 0]
    return np.clip((1.0 - p) / p, 0.0, bound)


def ratio_estimate(bundle: ModelBundle, x: np.ndarray,
                   bound: float = DEFAULT_RATIO_BOUND) -> RatioEstimate:
    return RatioEstimate(w_hat=density_ratio(bundle, x, bound), bound=bound)


def a_distance_from_error(eps: float) -> float:
    """Map a held-out domain-classification error to d_A = max(0, 2(1 - 2 eps))."""
    return max(0.0, 2.0 * (1.0 - 2.0 * eps))


def proxy_a_distance(features_src: np.ndarray, features_tgt: np.ndarray,
                     seed: int = 0, probe_epochs: int = 100) -> float:
    """d_A = max(0, 2(1 - 2 eps)) from a fresh logistic domain probe.

    Pooled features are split 50/50 into probe-train and held-out
    halves; the probe is a single logistic unit trained full-batch with
    momentum on standardized features.
    """
    fs = np.asarray(features_src, dtype=np.float64)
    ft = np.asarray(features_tgt, dtype=np.float64)
    if fs.shape[0] < 20 or ft.shape[0] < 20:
        raise ShapeError(f"proxy_a_distance: need >= 20 samples per domain, "
                         f"got {fs.shape[0]} and {ft.shape[0]}")
    x = np.concatenate([fs, ft])
    d = np.concatenate([np.ones(fs.shape[0]), np.zeros(ft.shape[0])])
    rng = RngStream(seed, "pad")
    order = rng.permutation(x.shape[0])
    half = x.shape[0] // 2
    tr, te = order[:half], order[half:]
    mean = x[tr].mean(axis=0)
    std = x[tr].std(axis=0) + 1e-8
    xtr = (x[tr] - mean) / std
    xte = (x[te] - mean) / std
    dtr, dte = d[tr], d[te]
    w = np.zeros(x.shape[1])
    b = 0.0
    vw = np.zeros_like(w)
    vb = 0.0
    lr, momentum = 1.0, 0.9
    for _ in range(probe_epochs):
        z = xtr @ w + b
        p = 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))
        gw = xtr.T @ (p - dtr) / xtr.shape[0]
        gb = float(np.mean(p - dtr))
        vw = momentum * vw + gw
        vb = momentum * vb + gb
        w -= lr * vw
        b -= lr * vb
    pred = (xte @ w + b) >= 0.0
    eps = float(np.mean(pred != (dte > 0.5)))
    return a_distance_from_error(eps)


def fit_domain_classifier(pair: DomainPair, seed: int = 0, epochs: int = 60,
                          batch: int = 32, lr: float = 0.05,
                          momentum: float = 0.9,
                          hidden_dim: int = 64, feature_dim: int = 32,
                          disc_hidden: int = 32,
                          dropout_rate: float = 0.5) -> ModelBundle:
    """Train features + discriminator for plain domain classification.

    No gradient reversal: this drives the discriminator toward the true
    domain posterior, which is what the Bayes inversion behind
    ``density_ratio`` assumes.
    """
    root = RngStream(seed, "domain_clf")
    bundle = ModelBundle(pair.input_dim, pair.num_classes,
                         hidden_dim=hidden_dim, feature_dim=feature_dim,
                         disc_hidden=disc_hidden, dropout_rate=dropout_rate,
                         rng=root.spawn("init"))
    batch_rng = root.spawn("batch")
    drop_rng = root.spawn("dropout")
    params = bundle.params()
    vel = {id(p): np.zeros_like(p.value) for p in params}
    xs, xt = pair.source.x, pair.target.x
    steps = max(1, xs.shape[0] // batch)
    zeros = np.zeros(batch)
    from .backend import sgd_update
    for _ in range(epochs):
        for _ in range(steps):
            i_s = batch_rng.integers(0, xs.shape[0], size=batch)
            i_t = batch_rng.integers(0, xt.shape[0], size=batch)
            p_s = forward_discriminator(bundle, forward_features(bundle, xs[i_s]),
                                        rng=drop_rng, train=True, grl=False)
            p_t = forward_discriminator(bundle, forward_features(bundle, xt[i_t]),
                                        rng=drop_rng, train=True, grl=False)
            loss = loss_adversarial_weighted(p_s, p_t, zeros, zeros)
            nd.backward(loss)
            for p in params:
                if p.grad is not None:
                    sgd_update(p.value, vel[id(p)], p.grad, lr, momentum)
            nd.zero_grad(params)
    return bundle


def spearman_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman rank correlation between two vectors."""
    rho, _ = stats.spearmanr(np.asarray(a, float), np.asarray(b, float))
    return float(rho)
