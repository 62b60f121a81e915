"""Model stack: feature extractor, class head, and dropout discriminator.

The three parts form one bundle trained jointly. The discriminator keeps
its dropout active during training forwards and during variance sampling
so the distribution being sampled is the one that was trained; eval-mode
forwards disable dropout entirely.
"""
from __future__ import annotations

import json
import logging
import math

import numpy as np

from . import ndgrad as nd
from .errors import ConfigError, ShapeError
from .ndgrad import Node, RngStream

log = logging.getLogger("utep.nets")

LAYER_NAMES = ("gf_w0", "gf_b0", "gf_w1", "gf_b1",
               "gy_w", "gy_b",
               "gd_w0", "gd_b0", "gd_w1", "gd_b1")


def _glorot(fan_in: int, fan_out: int, rng: RngStream) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


class ModelBundle:
    """Feature extractor G_f, class head G_y, domain discriminator G_d.

    Shapes: input -> hidden_dim (relu) -> feature_dim; classifier
    feature_dim -> num_classes (softmax); discriminator feature_dim ->
    disc_hidden (relu, dropout) -> 1 (sigmoid). ``grl_lam`` is the
    current gradient-reversal strength, updated by the training loop.
    """

    def __init__(self, input_dim: int, num_classes: int, hidden_dim: int = 64,
                 feature_dim: int = 32, disc_hidden: int = 32,
                 dropout_rate: float = 0.5, rng: RngStream | None = None):
        if input_dim < 1 or hidden_dim < 1 or feature_dim < 1 or disc_hidden < 1:
            raise ConfigError(f"all layer dims must be >= 1, got input={input_dim} "
                              f"hidden={hidden_dim} feature={feature_dim} "
                              f"disc={disc_hidden}")
        if num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
        if not 0.0 <= dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.hidden_dim = hidden_dim
        self.feature_dim = feature_dim
        self.disc_hidden = disc_hidden
        self.dropout_rate = float(dropout_rate)
        self.grl_lam = 0.0
        r = rng if rng is not None else RngStream(0, "init")
        self.gf_w0 = nd.param(_glorot(input_dim, hidden_dim, r))
        self.gf_b0 = nd.param(np.zeros((1, hidden_dim)))
        self.gf_w1 = nd.param(_glorot(hidden_dim, feature_dim, r))
        self.gf_b1 = nd.param(np.zeros((1, feature_dim)))
        self.gy_w = nd.param(_glorot(feature_dim, num_classes, r))
        self.gy_b = nd.param(np.zeros((1, num_classes)))
        self.gd_w0 = nd.param(_glorot(feature_dim, disc_hidden, r))
        self.gd_b0 = nd.param(np.zeros((1, disc_hidden)))
        self.gd_w1 = nd.param(_glorot(disc_hidden, 1, r))
        self.gd_b1 = nd.param(np.zeros((1, 1)))

    def params(self) -> list[Node]:
        return [getattr(self, name) for name in LAYER_NAMES]

    def named_params(self) -> dict[str, Node]:
        return {name: getattr(self, name) for name in LAYER_NAMES}

    def feature_params(self) -> list[Node]:
        return [self.gf_w0, self.gf_b0, self.gf_w1, self.gf_b1]

    def classifier_params(self) -> list[Node]:
        return [self.gy_w, self.gy_b]

    def discriminator_params(self) -> list[Node]:
        return [self.gd_w0, self.gd_b0, self.gd_w1, self.gd_b1]


def _wrap_input(x, dim: int, who: str) -> Node:
    node = x if isinstance(x, Node) else nd.const(np.asarray(x, dtype=np.float64))
    if node.value.ndim != 2 or node.value.shape[1] != dim:
        raise ShapeError(f"{who}: expected shape (n, {dim}), got {node.value.shape}")
    return node


def forward_features(bundle: ModelBundle, x) -> Node:
    """f = G_f(x); accepts a raw array or an existing graph node."""
    xn = _wrap_input(x, bundle.input_dim, "forward_features")
    h = nd.relu(nd.add(nd.matmul(xn, bundle.gf_w0), bundle.gf_b0))
    return nd.add(nd.matmul(h, bundle.gf_w1), bundle.gf_b1)


def class_probs(bundle: ModelBundle, features: Node) -> Node:
    """g = G_y(f): per-row class probability vectors."""
    if features.value.shape[1] != bundle.feature_dim:
        raise ShapeError(f"class_probs: expected (n, {bundle.feature_dim}), "
                         f"got {features.value.shape}")
    return nd.softmax(nd.add(nd.matmul(features, bundle.gy_w), bundle.gy_b))


def forward_classifier(bundle: ModelBundle, x) -> Node:
    """g(x) = G_y(G_f(x)) probability matrix (n, C)."""
    return class_probs(bundle, forward_features(bundle, x))


def forward_discriminator(bundle: ModelBundle, features: Node,
                          mask: np.ndarray | None = None,
                          rng: RngStream | None = None,
                          train: bool = True, grl: bool = False) -> Node:
    """p = P(d=1|x) per sample, shape (n, 1), strictly inside (0, 1).

    In train mode dropout is applied to the hidden layer using ``mask``
    if given (frozen-mask reproducibility) or a fresh draw from ``rng``.
    Eval mode (train=False) skips dropout. With ``grl`` the features pass
    through gradient reversal at strength ``bundle.grl_lam``.
    """
    if features.value.shape[1] != bundle.feature_dim:
        raise ShapeError(f"forward_discriminator: expected (n, {bundle.feature_dim}), "
                         f"got {features.value.shape}")
    f = nd.gradient_reverse(features, bundle.grl_lam) if grl else features
    h = nd.relu(nd.add(nd.matmul(f, bundle.gd_w0), bundle.gd_b0))
    if train and bundle.dropout_rate > 0.0:
        if mask is None:
            if rng is None:
                raise ConfigError("forward_discriminator: train mode needs a "
                                  "dropout mask or an rng to draw one")
            mask = rng.keep_mask(h.value.shape, bundle.dropout_rate)
        h = nd.dropout(h, mask, bundle.dropout_rate)
    return nd.sigmoid(nd.add(nd.matmul(h, bundle.gd_w1), bundle.gd_b1))


def grl_lambda(progress: float) -> float:
    """Reversal strength schedule: 2 / (1 + exp(-10 p)) - 1 on p in [0, 1]."""
    p = float(progress)
    if p < 0.0 or p > 1.0:
        log.warning("grl_lambda: progress %.4f outside [0, 1], clamping", p)
        p = min(1.0, max(0.0, p))
    return 2.0 / (1.0 + math.exp(-10.0 * p)) - 1.0


def save_checkpoint(bundle: ModelBundle, path: str) -> None:
    """Write weights as flat JSON {layer: {rows, cols, data}}, lossless."""
    obj = {}
    for name, node in bundle.named_params().items():
        r, c = node.value.shape
        obj[name] = {"rows": r, "cols": c, "data": node.value.reshape(-1).tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)


def load_checkpoint(path: str, dropout_rate: float = 0.5) -> ModelBundle:
    """Rebuild a bundle from a checkpoint; dims are inferred from shapes.

    The dropout rate is not part of the on-disk format and must be
    supplied (default matches the build default).
    """
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    missing = [n for n in LAYER_NAMES if n not in obj]
    if missing:
        raise ConfigError(f"checkpoint {path} is missing layers: {missing}")
    arrays = {}
    for name in LAYER_NAMES:
        entry = obj[name]
        arr = np.asarray(entry["data"], dtype=np.float64)
        if arr.size != entry["rows"] * entry["cols"]:
            raise ShapeError(f"checkpoint layer {name}: data length {arr.size} "
                             f"vs shape ({entry['rows']}, {entry['cols']})")
        arrays[name] = arr.reshape(entry["rows"], entry["cols"])
    bundle = ModelBundle(
        input_dim=arrays["gf_w0"].shape[0],
        num_classes=arrays["gy_w"].shape[1],
        hidden_dim=arrays["gf_w0"].shape[1],
        feature_dim=arrays["gf_w1"].shape[1],
        disc_hidden=arrays["gd_w0"].shape[1],
        dropout_rate=dropout_rate,
    )
    for name in LAYER_NAMES:
        node = getattr(bundle, name)
        if node.value.shape != arrays[name].shape:
            raise ShapeError(f"checkpoint layer {name}: shape {arrays[name].shape} "
                             f"vs expected {node.value.shape}")
        node.value[...] = arrays[name]
    return bundle
