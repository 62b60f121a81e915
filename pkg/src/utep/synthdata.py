"""Synthetic domain pairs and split construction.

Two generators: rotated/translated two-moons (nonlinear boundary, domain
gap controlled by the angle) and Gaussian blob mixtures whose density
ratio p_t/p_s has a closed form, which the diagnostics use as ground
truth. Splits cover UDA (no target labels), SSDA (a stratified fraction
or k-shot of target labels) and SSL (one domain, k labels per class).
Every sample keeps its true label internally; ``labeled`` only controls
what the trainer may look at.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ShapeError
from .ndgrad import RngStream

log = logging.getLogger("utep.synthdata")


@dataclass
class Pool:
    """One domain's samples: coordinates, true labels, visibility mask."""
    x: np.ndarray
    y: np.ndarray
    labeled: np.ndarray
    domain: int

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        self.labeled = np.ascontiguousarray(self.labeled, dtype=bool)
        n = self.x.shape[0]
        if self.y.shape != (n,) or self.labeled.shape != (n,):
            raise ShapeError(f"pool: x {self.x.shape} vs y {self.y.shape} "
                             f"vs labeled {self.labeled.shape}")

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass
class DomainPair:
    """Source and target pools plus the generator parameters that made them."""
    source: Pool
    target: Pool
    num_classes: int
    meta: dict

    @property
    def input_dim(self) -> int:
        return self.source.x.shape[1]


def _moon_points(n: int, rng: RngStream, noise: float) -> tuple[np.ndarray, np.ndarray]:
    n_outer = n // 2
    n_inner = n - n_outer
    t_outer = np.linspace(0.0, math.pi, n_outer)
    t_inner = np.linspace(0.0, math.pi, n_inner)
    x = np.concatenate([
        np.column_stack([np.cos(t_outer), np.sin(t_outer)]),
        np.column_stack([1.0 - np.cos(t_inner), 0.5 - np.sin(t_inner)]),
    ])
    y = np.concatenate([np.zeros(n_outer, dtype=np.int64),
                        np.ones(n_inner, dtype=np.int64)])
    if noise > 0.0:
        x = x + rng.normal(x.shape, scale=noise)
    return x, y


# centroid of the noiseless two-moon construction; rotation pivots here
_MOON_CENTER = np.array([0.5, 0.25])


def gen_two_moons_shift(n_per_domain: int, rotation_deg: float,
                        translation: tuple[float, float] = (0.0, 0.0),
                        noise: float = 0.1, seed: int = 0) -> DomainPair:
    """Source: standard two moons. Target: rotated about the moon centroid
    by ``rotation_deg`` and translated."""
    if n_per_domain < 4:
        raise ConfigError(f"n_per_domain must be >= 4, got {n_per_domain}")
    if not 0.0 <= rotation_deg <= 90.0:
        raise ConfigError(f"rotation must be in [0, 90] degrees, got {rotation_deg}")
    if noise < 0.0:
        raise ConfigError(f"noise must be >= 0, got {noise}")
    rng = RngStream(seed, "moons")
    xs, ys = _moon_points(n_per_domain, rng.spawn("src"), noise)
    xt, yt = _moon_points(n_per_domain, rng.spawn("tgt"), noise)
    theta = math.radians(rotation_deg)
    rot = np.array([[math.cos(theta), math.sin(theta)],
                    [-math.sin(theta), math.cos(theta)]])
    xt = (xt - _MOON_CENTER) @ rot + _MOON_CENTER + np.asarray(translation, dtype=np.float64)
    meta = {"kind": "moons", "n_per_domain": n_per_domain,
            "rotation_deg": float(rotation_deg),
            "translation": [float(translation[0]), float(translation[1])],
            "noise": float(noise), "seed": int(seed)}
    return DomainPair(
        source=Pool(xs, ys, np.ones(n_per_domain, dtype=bool), domain=1),
        target=Pool(xt, yt, np.zeros(n_per_domain, dtype=bool), domain=0),
        num_classes=2, meta=meta)


def _blob_means(C: int, dim: int) -> np.ndarray:
    means = np.zeros((C, dim))
    radius = 3.0
    for c in range(C):
        angle = 2.0 * math.pi * c / C
        means[c, 0] = radius * math.cos(angle)
        means[c, 1] = radius * math.sin(angle)
    return means


def gen_gaussian_blobs(C: int, dim: int, shift, sigma: float, n: int,
                       seed: int = 0) -> DomainPair:
    """Equal-prior Gaussian class clusters; target means = source + shift."""
    if C < 2:
        raise ConfigError(f"C must be >= 2, got {C}")
    if dim < 2:
        raise ConfigError(f"dim must be >= 2, got {dim}")
    if n < C:
        raise ConfigError(f"n must be >= C, got n={n} C={C}")
    if sigma < 0.0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    delta = np.zeros(dim)
    shift = np.atleast_1d(np.asarray(shift, dtype=np.float64))
    if shift.size > dim:
        raise ShapeError(f"shift length {shift.size} exceeds dim {dim}")
    delta[:shift.size] = shift
    if sigma == 0.0 and not np.any(delta):
        log.warning("gen_gaussian_blobs: sigma=0 with zero shift gives "
                    "coincident point masses")
    means = _blob_means(C, dim)
    counts = np.full(C, n // C)
    counts[:n % C] += 1
    rng = RngStream(seed, "blobs")
    pools = []
    for domain, (name, offset) in enumerate([("tgt", delta), ("src", np.zeros(dim))]):
        sub = rng.spawn(name)
        xs, ys = [], []
        for c in range(C):
            center = means[c] + offset
            pts = center + sub.normal((counts[c], dim), scale=sigma) if sigma > 0 \
                else np.tile(center, (counts[c], 1))
            xs.append(pts)
            ys.append(np.full(counts[c], c, dtype=np.int64))
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        pools.append(Pool(x, y, np.full(x.shape[0], domain == 1, dtype=bool),
                          domain=domain))
    target, source = pools
    meta = {"kind": "blobs", "C": C, "dim": dim, "delta": delta.tolist(),
            "sigma": float(sigma), "n": int(n), "seed": int(seed),
            "means": means.tolist()}
    return DomainPair(source=source, target=target, num_classes=C, meta=meta)


def blob_density_ratio(pair: DomainPair, x: np.ndarray) -> np.ndarray:
    """Exact w(x) = p_t(x)/p_s(x) for a Gaussian-blob pair.

    Priors and the Gaussian normalizer cancel, leaving a ratio of
    exponential sums, evaluated with a shared log-sum-exp shift.
    """
    if pair.meta.get("kind") != "blobs":
        raise ConfigError(f"density ratio needs a blobs pair, got kind="
                          f"{pair.meta.get('kind')!r}")
    sigma = pair.meta["sigma"]
    if sigma <= 0.0:
        raise ConfigError("density ratio undefined for sigma = 0")
    means_s = np.asarray(pair.meta["means"])
    means_t = means_s + np.asarray(pair.meta["delta"])
    x = np.asarray(x, dtype=np.float64)
    d2_s = ((x[:, None, :] - means_s[None, :, :]) ** 2).sum(axis=2)
    d2_t = ((x[:, None, :] - means_t[None, :, :]) ** 2).sum(axis=2)
    es = -d2_s / (2.0 * sigma * sigma)
    et = -d2_t / (2.0 * sigma * sigma)
    shift = np.maximum(es.max(axis=1), et.max(axis=1))[:, None]
    return np.exp(et - shift).sum(axis=1) / np.exp(es - shift).sum(axis=1)


def _stratified_pick(y: np.ndarray, per_class: int, num_classes: int,
                     rng: RngStream) -> np.ndarray:
    chosen = []
    for c in range(num_classes):
        idx = np.flatnonzero(y == c)
        if idx.size < per_class:
            raise ConfigError(f"class {c} has {idx.size} samples, "
                              f"need {per_class} labeled")
        order = rng.permutation(idx.size)
        chosen.append(idx[order[:per_class]])
    return np.sort(np.concatenate(chosen))


def make_splits(pair: DomainPair, mode: str, seed: int = 0,
                ssda_frac: float = 0.01, ssda_shots: int = 0,
                ssl_shots: int = 3) -> DomainPair:
    """Set label visibility per mode; SSL restructures into one domain.

    UDA hides every target label. SSDA reveals a stratified fraction
    (>= 1 per class) or, when ``ssda_shots`` > 0, exactly that many per
    class. SSL discards the original target pool: the source pool is
    split into a k-shot labeled part (treated as the source/labeled
    domain) and an unlabeled rest (treated as the target).
    """
    rng = RngStream(seed, f"splits/{mode}")
    C = pair.num_classes
    if mode == "uda":
        src = replace(pair.source, labeled=np.ones(pair.source.n, dtype=bool))
        tgt = replace(pair.target, labeled=np.zeros(pair.target.n, dtype=bool))
        return DomainPair(src, tgt, C, {**pair.meta, "mode": mode})
    if mode == "ssda":
        if ssda_shots > 0:
            per_class = int(ssda_shots)
        else:
            if not 0.0 < ssda_frac < 1.0:
                raise ConfigError(f"ssda_frac must be in (0, 1), got {ssda_frac}")
            per_class = max(1, round(ssda_frac * pair.target.n / C))
        if per_class * C > pair.target.n:
            raise ConfigError(f"{per_class} labels per class over {C} classes "
                              f"exceed target pool of {pair.target.n}")
        labeled = np.zeros(pair.target.n, dtype=bool)
        labeled[_stratified_pick(pair.target.y, per_class, C, rng)] = True
        src = replace(pair.source, labeled=np.ones(pair.source.n, dtype=bool))
        tgt = replace(pair.target, labeled=labeled)
        return DomainPair(src, tgt, C, {**pair.meta, "mode": mode,
                                        "ssda_per_class": per_class})
    if mode == "ssl":
        if ssl_shots < 1:
            raise ConfigError(f"ssl_shots must be >= 1, got {ssl_shots}")
        if ssl_shots * C > pair.source.n:
            raise ConfigError(f"{ssl_shots} labels per class over {C} classes "
                              f"exceed pool of {pair.source.n}")
        pool = pair.source
        picked = _stratified_pick(pool.y, ssl_shots, C, rng)
        rest = np.setdiff1d(np.arange(pool.n), picked)
        src = Pool(pool.x[picked], pool.y[picked],
                   np.ones(picked.size, dtype=bool), domain=1)
        tgt = Pool(pool.x[rest], pool.y[rest],
                   np.zeros(rest.size, dtype=bool), domain=0)
        return DomainPair(src, tgt, C, {**pair.meta, "mode": mode,
                                        "ssl_shots": int(ssl_shots)})
    raise ConfigError(f"unknown mode {mode!r}; expected uda, ssda or ssl")


def balance_upsample(pair: DomainPair, seed: int = 0) -> DomainPair:
    """Resample the smaller pool with replacement until n_s = n_t.

    Every original sample is kept; only the extra slots are drawn
    randomly. Equal pools pass through untouched.
    """
    ns, nt = pair.source.n, pair.target.n
    if ns == 0 or nt == 0:
        raise ShapeError(f"balance_upsample: empty pool, n_s={ns} n_t={nt}")
    if ns == nt:
        return pair
    rng = RngStream(seed, "balance")
    small, grow_source = (pair.source, True) if ns < nt else (pair.target, False)
    deficit = abs(nt - ns)
    extra = rng.integers(0, small.n, size=deficit)
    grown = Pool(np.concatenate([small.x, small.x[extra]]),
                 np.concatenate([small.y, small.y[extra]]),
                 np.concatenate([small.labeled, small.labeled[extra]]),
                 domain=small.domain)
    if grow_source:
        return DomainPair(grown, pair.target, pair.num_classes, pair.meta)
    return DomainPair(pair.source, grown, pair.num_classes, pair.meta)


def save_csv(pair: DomainPair, path: str) -> None:
    """Write both pools as rows of ``x0,...,xd,y,domain,labeled``."""
    d = pair.input_dim
    header = ",".join([f"x{i}" for i in range(d)] + ["y", "domain", "labeled"])
    lines = [header]
    for pool in (pair.source, pair.target):
        for i in range(pool.n):
            coords = ",".join(repr(float(v)) for v in pool.x[i])
            lines.append(f"{coords},{int(pool.y[i])},{pool.domain},"
                         f"{int(pool.labeled[i])}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_csv(path: str) -> DomainPair:
    """Read a dataset written by ``save_csv`` (or any CSV in its schema)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ConfigError(f"dataset {path} is empty")
    header = lines[0].split(",")
    if len(header) < 4 or header[-3:] != ["y", "domain", "labeled"]:
        raise ConfigError(f"dataset {path}: header must end with y,domain,labeled, "
                          f"got {header}")
    d = len(header) - 3
    rows = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != len(header):
            raise ConfigError(f"dataset {path}:{ln_no}: expected "
                              f"{len(header)} fields, got {len(parts)}")
        rows.append(parts)
    data = np.asarray(rows, dtype=np.float64)
    x, y = data[:, :d], data[:, d].astype(np.int64)
    domain, labeled = data[:, d + 1].astype(np.int64), data[:, d + 2] > 0.5
    pools = {}
    for dom in (1, 0):
        sel = domain == dom
        if not np.any(sel):
            raise ConfigError(f"dataset {path}: no rows with domain={dom}")
        pools[dom] = Pool(x[sel], y[sel], labeled[sel], domain=dom)
    return DomainPair(pools[1], pools[0], num_classes=int(y.max()) + 1,
                      meta={"kind": "csv", "path": path})
