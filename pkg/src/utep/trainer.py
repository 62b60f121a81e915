"""Mini-batch SGD training loop tying data, nets, and objectives together.

Methods: ``source_only`` (classifier only), ``dann`` (adversarial
baseline), ``dann_utep`` (adversarial + uncertainty weighting + bias
loss + gated pseudo-label losses, each part independently toggleable).
Runs are bit-deterministic given (config, seed): every random draw
comes from a named substream, and disabled parts are never built, so
a dann_utep run with everything switched off consumes exactly the same
random numbers and builds exactly the same graph as plain dann.
"""
from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import ndgrad as nd
from .backend import sgd_update
from .errors import ConfigError, NanAbortError, NonFiniteError, ShapeError
from .evalmetrics import proxy_a_distance
from .losses import (LossReport, assemble_adversarial, build_report, combine_tce,
                     loss_adversarial_weighted, loss_bias, loss_classifier,
                     loss_nce, loss_pce, loss_total)
from .ndgrad import Node, RngStream
from .nets import (ModelBundle, class_probs, forward_discriminator,
                   forward_features, grl_lambda)
from .pseudo import select_negative, select_positive
from .synthdata import (DomainPair, balance_upsample, gen_gaussian_blobs,
                        gen_two_moons_shift, load_csv, make_splits)
from .uncertainty import mc_variance, mc_variance_node, normalize_mu, selection_weight

log = logging.getLogger("utep.trainer")

MODES = ("uda", "ssda", "ssl")
METHODS = ("source_only", "dann", "dann_utep")
DATASETS = ("moons", "blobs", "csv")

# (batch_src, batch_tgt_unlabeled, batch_tgt_labeled) per mode
BATCH_DEFAULTS = {"uda": (16, 16, 0), "ssda": (8, 16, 8), "ssl": (16, 16, 0)}


@dataclass
class ExperimentConfig:
    """Flat run configuration; every field maps to one config-file key."""
    mode: str = "uda"
    method: str = "dann_utep"
    dataset: str = "moons"
    n_per_domain: int = 500
    rotation_deg: float = 30.0
    translation_x: float = 0.0
    translation_y: float = 0.0
    noise: float = 0.1
    blob_classes: int = 3
    blob_dim: int = 2
    blob_shift_x: float = 2.0
    blob_shift_y: float = 0.0
    blob_sigma: float = 1.0
    data_csv: str = ""
    ssda_frac: float = 0.01
    ssda_shots: int = 0
    ssl_shots: int = 3
    hidden_dim: int = 64
    feature_dim: int = 32
    disc_hidden: int = 32
    dropout_rate: float = 0.5
    K: int = 10
    beta: float = 0.95
    gamma: float = 0.05
    alpha_adv: float = 1.0
    alpha_nce: float = 1.0
    alpha_bias: float = 0.3
    alpha_tce: float = 1.0
    warmup_frac: float = 0.2
    siw: bool = True
    tiw: bool = True
    sbl: bool = True
    tbl: bool = True
    pce: bool = True
    nce: bool = True
    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 300
    batch_src: int = -1
    batch_tgt_unlabeled: int = -1
    batch_tgt_labeled: int = -1
    ratio_bound: float = 100.0
    seed: int = 0
    out_dir: str = "runs/default"

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        """Build from a flat mapping; values may be strings or typed."""
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, known[key])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_mapping(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        if self.dataset == "csv" and not self.data_csv:
            raise ConfigError("dataset=csv requires data_csv")
        for name in ("alpha_adv", "alpha_nce", "alpha_bias", "alpha_tce"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 < self.gamma < self.beta < 1.0:
            raise ConfigError(f"thresholds need 0 < gamma < beta < 1, got "
                              f"gamma={self.gamma} beta={self.beta}")
        if self.method == "dann_utep" and self.K < 2:
            raise ConfigError(f"K must be >= 2 for dann_utep, got {self.K}")
        if self.lr <= 0.0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not 0.0 <= self.warmup_frac <= 1.0:
            raise ConfigError(f"warmup_frac must be in [0, 1], got {self.warmup_frac}")
        if self.ratio_bound <= 0.0:
            raise ConfigError(f"ratio_bound must be > 0, got {self.ratio_bound}")


_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _coerce(key: str, raw, typ) -> object:
    typ = {bool: "bool", int: "int", float: "float", str: "str"}.get(typ, typ)
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if typ == "bool":
            if isinstance(raw, bool):
                return raw
            token = str(raw).lower()
            if token in _TRUE:
                return True
            if token in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if typ == "int":
            if isinstance(raw, bool):
                raise ValueError("boolean where integer expected")
            return int(raw)
        if typ == "float":
            return float(raw)
        return str(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def parse_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and # comments ignored."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{no}: expected 'key = value', got {text!r}")
            key, _, value = text.partition("=")
            mapping[key.strip()] = value.strip()
    return mapping


def load_config(path: str) -> ExperimentConfig:
    return ExperimentConfig.from_mapping(parse_config_file(path))


def resolve_batches(config: ExperimentConfig) -> tuple[int, int, int]:
    """Apply per-mode defaults to any batch size left at -1."""
    d_src, d_tu, d_tl = BATCH_DEFAULTS[config.mode]
    bs = config.batch_src if config.batch_src >= 0 else d_src
    btu = config.batch_tgt_unlabeled if config.batch_tgt_unlabeled >= 0 else d_tu
    btl = config.batch_tgt_labeled if config.batch_tgt_labeled >= 0 else d_tl
    if bs < 1:
        raise ConfigError(f"batch_src must be >= 1, got {bs}")
    if config.method != "source_only" and btu + btl < 1:
        raise ConfigError("adversarial methods need target samples per batch, "
                          f"got batch_tgt_unlabeled={btu} batch_tgt_labeled={btl}")
    return bs, btu, btl


def build_pair(config: ExperimentConfig) -> DomainPair:
    """Generate (or load) the dataset and apply the mode's label split."""
    if config.dataset == "moons":
        pair = gen_two_moons_shift(config.n_per_domain, config.rotation_deg,
                                   (config.translation_x, config.translation_y),
                                   config.noise, seed=config.seed)
    elif config.dataset == "blobs":
        pair = gen_gaussian_blobs(config.blob_classes, config.blob_dim,
                                  (config.blob_shift_x, config.blob_shift_y),
                                  config.blob_sigma, config.n_per_domain,
                                  seed=config.seed)
    else:
        pair = load_csv(config.data_csv)
    return make_splits(pair, config.mode, seed=config.seed,
                       ssda_frac=config.ssda_frac, ssda_shots=config.ssda_shots,
                       ssl_shots=config.ssl_shots)


METRIC_COLUMNS = ("epoch", "L_y", "L_adv", "L_bias", "L_pce", "L_nce", "L_total",
                  "target_accuracy", "source_accuracy", "mean_u", "mean_mu",
                  "proxy_A_distance")


@dataclass
class MetricsLog:
    """Per-epoch metric rows plus in-memory wall-clock times.

    Wall times stay out of the CSV so the file is identical across
    reruns of the same (config, seed); the total lands in summary.json.
    """
    rows: list[dict] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)
    total_steps: int = 0

    def append(self, row: dict, wall: float) -> None:
        bad = [k for k in METRIC_COLUMNS if not np.isfinite(row[k])]
        if bad:
            raise NonFiniteError(f"metrics row {row.get('epoch')}: non-finite "
                                 f"fields {bad}")
        self.rows.append(row)
        self.wall_ms.append(wall)

    def to_csv(self, path: str) -> None:
        lines = [",".join(METRIC_COLUMNS)]
        for row in self.rows:
            cells = [str(int(row["epoch"]))]
            cells += [repr(float(row[k])) for k in METRIC_COLUMNS[1:]]
            lines.append(",".join(cells))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    def column(self, name: str) -> np.ndarray:
        return np.asarray([row[name] for row in self.rows], dtype=np.float64)


class _RunState:
    """Everything one training step needs, resolved once up front."""

    def __init__(self, config: ExperimentConfig, pair: DomainPair):
        self.config = config
        self.pair = pair
        src, tgt = pair.source, pair.target
        if not src.labeled.any():
            raise ConfigError("source pool has no labeled samples")
        self.x_src = src.x[src.labeled]
        self.y_src = src.y[src.labeled]
        self.tl_idx = np.flatnonzero(tgt.labeled)
        self.tu_idx = np.flatnonzero(~tgt.labeled)
        self.bs, self.btu, self.btl = resolve_batches(config)
        if self.btl > 0 and self.tl_idx.size == 0:
            raise ConfigError(f"batch_tgt_labeled={self.btl} but the target pool "
                              "has no labeled samples")
        if self.btu > 0 and self.tu_idx.size == 0:
            raise ConfigError(f"batch_tgt_unlabeled={self.btu} but the target pool "
                              "has no unlabeled samples")
        m = config.method
        self.adv_on = m in ("dann", "dann_utep")
        self.weight_src = m == "dann_utep" and config.siw
        self.weight_tgt = m == "dann_utep" and config.tiw
        self.bias_on = (m == "dann_utep" and config.alpha_bias > 0.0
                        and (config.sbl or config.tbl))
        self.pseudo_on = (m == "dann_utep" and config.alpha_tce > 0.0
                          and (config.pce or config.nce) and self.btu > 0)
        self.mc_on = (self.weight_src or self.weight_tgt or self.bias_on
                      or self.pseudo_on)


def _warmup_factor(step: int, total_steps: int, frac: float) -> float:
    warm = frac * total_steps
    if warm <= 0.0:
        return 1.0
    return min(1.0, step / warm)


def _train_step(state: _RunState, bundle: ModelBundle, step: int, total_steps: int,
                rng_batch: RngStream, rng_drop: RngStream, rng_mc: RngStream,
                velocities: dict) -> tuple[LossReport, float, float]:
    cfg = state.config
    bundle.grl_lam = grl_lambda(step / total_steps) if state.adv_on else 0.0

    i_src = rng_batch.integers(0, state.x_src.shape[0], size=state.bs)
    i_tl = (rng_batch.integers(0, state.tl_idx.size, size=state.btl)
            if state.btl > 0 else None)
    i_tu = (rng_batch.integers(0, state.tu_idx.size, size=state.btu)
            if state.btu > 0 and state.adv_on else None)

    tgt = state.pair.target
    f_src = forward_features(bundle, state.x_src[i_src])
    f_tl = (forward_features(bundle, tgt.x[state.tl_idx[i_tl]])
            if i_tl is not None else None)
    f_tu = (forward_features(bundle, tgt.x[state.tu_idx[i_tu]])
            if i_tu is not None else None)

    # supervised term: source labels plus any labeled-target labels
    if f_tl is not None:
        g_lab = class_probs(bundle, nd.concat([f_src, f_tl]))
        y_lab = np.concatenate([state.y_src[i_src], tgt.y[state.tl_idx[i_tl]]])
    else:
        g_lab = class_probs(bundle, f_src)
        y_lab = state.y_src[i_src]
    l_y = loss_classifier(g_lab, y_lab)

    l_domain = None
    u_node = None
    mu_all = s_all = None
    mean_u = mean_mu = 0.0
    if state.adv_on:
        tgt_feats = [f for f in (f_tl, f_tu) if f is not None]
        f_tgt = tgt_feats[0] if len(tgt_feats) == 1 else nd.concat(tgt_feats)
        if state.mc_on:
            group = [f_src] + tgt_feats
            f_all = group[0] if len(group) == 1 else nd.concat(group)
            u_node = mc_variance_node(bundle, f_all, cfg.K, rng_mc)
            U = u_node.value[:, 0]
            mu_all = normalize_mu(U)
            s_all = selection_weight(mu_all)
            mean_u = float(U.mean())
            mean_mu = float(mu_all.mean())
        ns = state.bs
        nt = f_tgt.value.shape[0]
        mu_src = mu_all[:ns] if state.weight_src else np.zeros(ns)
        mu_tgt = mu_all[ns:] if state.weight_tgt else np.zeros(nt)
        p_src = forward_discriminator(bundle, f_src, rng=rng_drop, train=True,
                                      grl=True)
        p_tgt = forward_discriminator(bundle, f_tgt, rng=rng_drop, train=True,
                                      grl=True)
        l_domain = loss_adversarial_weighted(p_src, p_tgt, mu_src, mu_tgt)

    l_adv = assemble_adversarial(l_y, l_domain, cfg.alpha_adv)

    l_bias_node = None
    if state.bias_on:
        sel = u_node
        if not (cfg.sbl and cfg.tbl):
            n_all = u_node.value.shape[0]
            mask = np.zeros((n_all, 1))
            if cfg.sbl:
                mask[:state.bs] = 1.0
            if cfg.tbl:
                mask[state.bs:] = 1.0
            sel = nd.mul(u_node, nd.const(mask))
        l_bias_node = loss_bias(sel)

    l_pce_node = l_nce_node = None
    if state.pseudo_on:
        g_tu = class_probs(bundle, f_tu)
        s_tu = s_all[state.bs + state.btl:]
        if cfg.pce:
            h = select_positive(g_tu.value, cfg.beta)
            l_pce_node = loss_pce(g_tu, h, s_tu)
        if cfg.nce:
            lmask = select_negative(g_tu.value, cfg.gamma, cfg.beta)
            l_nce_node = loss_nce(g_tu, lmask, s_tu)
    l_tce_node = combine_tce(l_pce_node, l_nce_node, cfg.alpha_nce)

    alpha_tce_eff = cfg.alpha_tce * _warmup_factor(step, total_steps,
                                                   cfg.warmup_frac)
    total = loss_total(l_adv, l_bias_node, l_tce_node, cfg.alpha_bias,
                       alpha_tce_eff)

    report = build_report(
        l_y=l_y.item(),
        l_domain=l_domain.item() if l_domain is not None else 0.0,
        l_bias=l_bias_node.item() if l_bias_node is not None else 0.0,
        l_pce=l_pce_node.item() if l_pce_node is not None else 0.0,
        l_nce=l_nce_node.item() if l_nce_node is not None else 0.0,
        alpha_adv=cfg.alpha_adv, alpha_nce=cfg.alpha_nce,
        alpha_bias=cfg.alpha_bias, alpha_tce=alpha_tce_eff)
    if not np.isfinite(report.L_total):
        raise NonFiniteError(f"step {step}: total loss {report.L_total}")

    params = bundle.params()
    nd.backward(total)
    sgd_step(params, cfg.lr, cfg.momentum, velocities)
    nd.zero_grad(params)
    return report, mean_u, mean_mu


def sgd_step(params: list[Node], lr: float, momentum: float,
             velocities: dict) -> None:
    """v <- momentum v + g; theta <- theta - lr v, for every param with a grad."""
    for p in params:
        if p.grad is None:
            continue
        if not np.isfinite(p.grad).all():
            raise NonFiniteError(f"sgd_step: non-finite gradient, shape "
                                 f"{p.grad.shape}")
        sgd_update(p.value, velocities[id(p)], p.grad, lr, momentum)


def evaluate(bundle: ModelBundle, pair: DomainPair,
             subset: str = "unlabeled_target") -> float:
    """Argmax accuracy with dropout off, on the named subset of the pair."""
    tgt, src = pair.target, pair.source
    if subset == "unlabeled_target":
        sel = ~tgt.labeled
        x, y = tgt.x[sel], tgt.y[sel]
    elif subset == "source":
        x, y = src.x, src.y
    elif subset == "all":
        x = np.concatenate([src.x, tgt.x])
        y = np.concatenate([src.y, tgt.y])
    else:
        raise ConfigError(f"unknown subset {subset!r}; expected unlabeled_target, "
                          "source or all")
    if x.shape[0] == 0:
        raise ShapeError(f"evaluate: subset {subset!r} is empty")
    g = class_probs(bundle, forward_features(bundle, x)).value
    return float(np.mean(g.argmax(axis=1) == y))


def _dump_nan_batch(config: ExperimentConfig, epoch: int, step: int,
                    message: str) -> str | None:
    if not config.out_dir:
        return None
    try:
        os.makedirs(config.out_dir, exist_ok=True)
        path = os.path.join(config.out_dir, "nan_dump.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"epoch": epoch, "step": step, "message": message,
                       "config": config.to_mapping()}, fh, indent=2)
        return path
    except OSError:
        return None


def _dump_uncertainty(bundle: ModelBundle, pair: DomainPair, K: int,
                      rng: RngStream, path: str) -> None:
    x = np.concatenate([pair.source.x, pair.target.x])
    domain = np.concatenate([np.ones(pair.source.n, dtype=np.int64),
                             np.zeros(pair.target.n, dtype=np.int64)])
    u = mc_variance(bundle, forward_features(bundle, x), K, rng)
    mu = normalize_mu(u)
    s = selection_weight(mu)
    lines = ["sample_id,domain,u,mu,s"]
    for i in range(x.shape[0]):
        lines.append(f"{i},{domain[i]},{repr(float(u[i]))},"
                     f"{repr(float(mu[i]))},{repr(float(s[i]))}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def train(config: ExperimentConfig, pair: DomainPair | None = None,
          dump_uncertainty_dir: str | None = None
          ) -> tuple[ModelBundle, MetricsLog]:
    """Run the configured experiment; returns the trained bundle and log.

    The pair may be passed in (it is balanced here either way); absent,
    it is generated from the config. Raises NanAbortError if any loss
    goes non-finite, after writing a diagnostic dump.
    """
    config.validate()
    if pair is None:
        pair = build_pair(config)
    pair = balance_upsample(pair, seed=config.seed)
    state = _RunState(config, pair)

    root = RngStream(config.seed)
    bundle = ModelBundle(pair.input_dim, pair.num_classes,
                         hidden_dim=config.hidden_dim,
                         feature_dim=config.feature_dim,
                         disc_hidden=config.disc_hidden,
                         dropout_rate=config.dropout_rate,
                         rng=root.spawn("init"))
    rng_batch = root.spawn("batch")
    rng_drop = root.spawn("dropout")
    rng_mc = root.spawn("mc")
    velocities = {id(p): np.zeros_like(p.value) for p in bundle.params()}
    metrics = MetricsLog()

    steps_per_epoch = max(1, state.x_src.shape[0] // state.bs)
    total_steps = max(1, config.epochs * steps_per_epoch)
    metrics.total_steps = config.epochs * steps_per_epoch
    if dump_uncertainty_dir is not None:
        os.makedirs(dump_uncertainty_dir, exist_ok=True)

    step = 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        sums = {k: 0.0 for k in ("L_y", "L_adv", "L_bias", "L_pce", "L_nce",
                                 "L_total", "mean_u", "mean_mu")}
        for _ in range(steps_per_epoch):
            try:
                report, mean_u, mean_mu = _train_step(
                    state, bundle, step, total_steps, rng_batch, rng_drop,
                    rng_mc, velocities)
            except NonFiniteError as exc:
                dump = _dump_nan_batch(config, epoch, step, str(exc))
                raise NanAbortError(f"non-finite loss at epoch {epoch} step "
                                    f"{step}: {exc}", dump_path=dump) from exc
            sums["L_y"] += report.L_y
            sums["L_adv"] += report.L_adv
            sums["L_bias"] += report.L_bias
            sums["L_pce"] += report.L_pce
            sums["L_nce"] += report.L_nce
            sums["L_total"] += report.L_total
            sums["mean_u"] += mean_u
            sums["mean_mu"] += mean_mu
            step += 1

        acc_t = evaluate(bundle, pair, "unlabeled_target")
        acc_s = evaluate(bundle, pair, "source")
        feats_src = forward_features(bundle, pair.source.x).value
        feats_tgt = forward_features(bundle, pair.target.x).value
        probe_seed = int(RngStream(config.seed, f"proxy/{epoch}").integers(0, 2**31))
        pad = proxy_a_distance(feats_src, feats_tgt, seed=probe_seed)
        k = steps_per_epoch
        row = {"epoch": epoch, "L_y": sums["L_y"] / k, "L_adv": sums["L_adv"] / k,
               "L_bias": sums["L_bias"] / k, "L_pce": sums["L_pce"] / k,
               "L_nce": sums["L_nce"] / k, "L_total": sums["L_total"] / k,
               "target_accuracy": acc_t, "source_accuracy": acc_s,
               "mean_u": sums["mean_u"] / k, "mean_mu": sums["mean_mu"] / k,
               "proxy_A_distance": pad}
        metrics.append(row, wall=(time.perf_counter() - t0) * 1e3)
        if dump_uncertainty_dir is not None and config.K >= 2 \
                and config.dropout_rate > 0.0:
            _dump_uncertainty(bundle, pair, config.K,
                              root.spawn(f"mcdump/{epoch}"),
                              os.path.join(dump_uncertainty_dir,
                                           f"uncertainty_epoch{epoch:04d}.csv"))
        log.debug("epoch %d: target acc %.4f, proxy A %.4f", epoch, acc_t, pad)
    return bundle, metrics
