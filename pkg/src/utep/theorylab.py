"""Numerical verification of the bias-bound chain on discrete instances.

All expectations are exact finite sums over small supports, so bound
checks carry no sampling error; randomness only generates instances.
The chain: an importance-weighting identity, a Young-inequality bound
on the weighting bias, a pointwise bound translating ratio error into
discriminator-output error, the variance decomposition of that output
error, and the final variance-plus-mean-gap bound under aligned domains
(true discriminator output constant at 0.5).

Variable map used throughout: w = p_t/p_s is the true ratio, W == w,
P = 1/(1+W) is the true source-posterior output, and the estimate
w_hat gives W_hat and P_hat the same way. W in [0, N] puts P in
[1/(N+1), 1].
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .ndgrad import RngStream

IDENTITY_TOL = 1e-12
# relative slack for float rounding when asserting exact-arithmetic bounds
BOUND_SLACK = 1e-12

CHECK_NAMES = ("importance_identity", "bias_bound", "ratio_variance_bound",
               "variance_decomposition", "final_bound")

RATIO_GRID_BOUNDS = (1, 2, 3, 5, 10)
RATIO_GRID_STEP = 1e-3


@dataclass
class DiscreteInstance:
    """Finite-support instance: densities, per-point loss, ratio estimate."""
    p_s: np.ndarray
    p_t: np.ndarray
    loss: np.ndarray
    w_hat: np.ndarray
    n_bound: float = 1.0

    def __post_init__(self):
        m = self.p_s.size
        if m < 1 or self.p_t.size != m or self.loss.size != m \
                or self.w_hat.size != m:
            raise ShapeError(f"instance vectors disagree: p_s {self.p_s.shape}, "
                             f"p_t {self.p_t.shape}, loss {self.loss.shape}, "
                             f"w_hat {self.w_hat.shape}")
        if np.any((self.p_s <= 0.0) & (self.p_t > 0.0)):
            raise ShapeError("instance has target mass where source density is 0")

    @property
    def w(self) -> np.ndarray:
        return self.p_t / self.p_s

    def to_dict(self) -> dict:
        return {"p_s": self.p_s.tolist(), "p_t": self.p_t.tolist(),
                "loss": self.loss.tolist(), "w_hat": self.w_hat.tolist(),
                "n_bound": self.n_bound}


def check_importance_identity(inst: DiscreteInstance) -> tuple[float, float, float]:
    """E_t[L] vs E_s[w L] by exact summation; returns (lhs, rhs, |diff|)."""
    lhs = float(np.sum(inst.p_t * inst.loss))
    rhs = float(np.sum(inst.p_s * inst.w * inst.loss))
    return lhs, rhs, abs(lhs - rhs)


def check_bias_bound(inst: DiscreteInstance) -> tuple[float, float, bool]:
    """|E_s[(w_hat - w) L]| <= (E_s[(w_hat - w)^2] + E_s[L^2]) / 2."""
    diff = inst.w_hat - inst.w
    lhs = abs(float(np.sum(inst.p_s * diff * inst.loss)))
    rhs = 0.5 * float(np.sum(inst.p_s * diff * diff)
                      + np.sum(inst.p_s * inst.loss * inst.loss))
    return lhs, rhs, lhs <= rhs + BOUND_SLACK * max(1.0, rhs)


def check_ratio_variance_bound(n_bound: int, step: float = RATIO_GRID_STEP,
                               flip: bool = False) -> dict:
    """Grid-sweep ((P-Phat)/(P Phat))^2 <= (N+1)^4 (P-Phat)^2 on
    [1/(N+1), 1]^2; returns points, failures, max ratio, min margin."""
    lo = 1.0 / (n_bound + 1.0)
    grid = np.arange(lo, 1.0 + step / 2.0, step)
    grid[-1] = min(grid[-1], 1.0)
    P = grid[:, None]
    Phat = grid[None, :]
    diff = P - Phat
    off = diff != 0.0
    lhs = (diff / (P * Phat)) ** 2
    rhs = (n_bound + 1.0) ** 4 * diff ** 2
    ok = lhs <= rhs * (1.0 + BOUND_SLACK)
    if flip:
        ok = ~ok
    failures = int(np.count_nonzero(off & ~ok))
    ratio = np.where(off, lhs / np.where(off, rhs, 1.0), 0.0)
    margin = float((rhs - lhs)[off].min()) if off.any() else 0.0
    return {"n_bound": n_bound, "points": int(off.sum()), "failures": failures,
            "max_ratio": float(ratio.max()), "min_margin": margin}


def check_variance_decomposition(q: np.ndarray, P: np.ndarray,
                                 Phat: np.ndarray) -> tuple[float, float, float, float]:
    """Exact moments of E[(P - Phat)^2] vs Var P + Var Phat + mean gap^2.

    Returns (lhs, rhs, gap, cov); gap = lhs - rhs must equal -2 cov.
    """
    if q.size < 2:
        raise ShapeError(f"variance decomposition needs >= 2 support points, "
                         f"got {q.size}")
    ep = float(np.sum(q * P))
    eh = float(np.sum(q * Phat))
    var_p = float(np.sum(q * (P - ep) ** 2))
    var_h = float(np.sum(q * (Phat - eh) ** 2))
    cov = float(np.sum(q * (P - ep) * (Phat - eh)))
    lhs = float(np.sum(q * (P - Phat) ** 2))
    rhs = var_p + var_h + (ep - eh) ** 2
    return lhs, rhs, lhs - rhs, cov


def check_final_bound(q: np.ndarray, Phat: np.ndarray,
                      n_bound: float) -> tuple[float, float, bool, float]:
    """Aligned-domain bound: with P constant 0.5 (so W == w == 1),
    E[(W_hat - W)^2] <= 2 (N+1)^4 (Var Phat + (E P - E Phat)^2).

    Returns (lhs, rhs, holds, tightness = lhs/rhs or 0).
    """
    P = 0.5
    what = (1.0 - Phat) / Phat
    lhs = float(np.sum(q * (what - 1.0) ** 2))
    eh = float(np.sum(q * Phat))
    var_h = float(np.sum(q * (Phat - eh) ** 2))
    rhs = 2.0 * (n_bound + 1.0) ** 4 * (var_h + (P - eh) ** 2)
    holds = lhs <= rhs + BOUND_SLACK * max(1.0, rhs)
    tightness = lhs / rhs if rhs > 0.0 else 0.0
    return lhs, rhs, holds, tightness


# ------------------------------------------------------- instance gen

def _random_dist(rng: RngStream, m: int) -> np.ndarray:
    v = rng.uniform(0.05, 1.0, m)
    return v / v.sum()


def random_instance(rng: RngStream, exact_ratio: bool) -> DiscreteInstance:
    m = int(rng.integers(2, 13))
    p_s = _random_dist(rng, m)
    p_t = _random_dist(rng, m)
    loss = rng.uniform(0.0, 3.0, m)
    w = p_t / p_s
    w_hat = w.copy() if exact_ratio else rng.uniform(0.01, 4.0, m)
    return DiscreteInstance(p_s=p_s, p_t=p_t, loss=loss, w_hat=w_hat)


def _joint_values(rng: RngStream) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    m = int(rng.integers(2, 13))
    q = _random_dist(rng, m)
    P = rng.uniform(0.05, 0.95, m)
    Phat = rng.uniform(0.05, 0.95, m)
    return q, P, Phat


def _product_values(rng: RngStream) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Independent product distribution: Cov(P, Phat) = 0 by construction."""
    mp = int(rng.integers(2, 5))
    mh = int(rng.integers(2, 5))
    qp = _random_dist(rng, mp)
    qh = _random_dist(rng, mh)
    vp = rng.uniform(0.05, 0.95, mp)
    vh = rng.uniform(0.05, 0.95, mh)
    q = (qp[:, None] * qh[None, :]).reshape(-1)
    P = np.repeat(vp, mh)
    Phat = np.tile(vh, mp)
    return q, P, Phat


# ------------------------------------------------------------ run_all

def run_all(trials: int, seed: int = 0, corrupt: str | None = None) -> list[dict]:
    """Run all five checks; returns one report dict per check.

    Each report carries name, trials, failures, worst_margin (min slack
    for bounds, tolerance minus worst error for identities) and an
    example_failure when anything failed. ``corrupt`` flips the named
    check's pass predicate, for negative-testing the harness itself.
    """
    if trials < 1:
        raise ShapeError(f"trials must be >= 1, got {trials}")
    if corrupt is not None and corrupt not in CHECK_NAMES:
        raise ShapeError(f"unknown check {corrupt!r}; choose from {CHECK_NAMES}")
    root = RngStream(seed, "theory")
    reports = []

    rng = root.spawn("identity")
    worst_err = 0.0
    failures = 0
    example = None
    for _ in range(trials):
        inst = random_instance(rng, exact_ratio=True)
        _, _, err = check_importance_identity(inst)
        worst_err = max(worst_err, err)
        bad = err > IDENTITY_TOL
        if corrupt == "importance_identity":
            bad = not bad
        if bad:
            failures += 1
            if example is None:
                example = inst.to_dict() | {"abs_err": err}
    reports.append({"name": "importance_identity", "trials": trials,
                    "failures": failures, "worst_margin": IDENTITY_TOL - worst_err,
                    "max_abs_err": worst_err, "example_failure": example})

    rng = root.spawn("bias_bound")
    min_margin = np.inf
    failures = 0
    example = None
    for _ in range(trials):
        inst = random_instance(rng, exact_ratio=False)
        lhs, rhs, holds = check_bias_bound(inst)
        min_margin = min(min_margin, rhs - lhs)
        if corrupt == "bias_bound":
            holds = not holds
        if not holds:
            failures += 1
            if example is None:
                example = inst.to_dict() | {"lhs": lhs, "rhs": rhs}
    reports.append({"name": "bias_bound", "trials": trials, "failures": failures,
                    "worst_margin": float(min_margin), "example_failure": example})

    total_points = 0
    failures = 0
    max_ratio = 0.0
    min_margin = np.inf
    example = None
    for n_bound in RATIO_GRID_BOUNDS:
        res = check_ratio_variance_bound(
            n_bound, flip=(corrupt == "ratio_variance_bound"))
        total_points += res["points"]
        failures += res["failures"]
        max_ratio = max(max_ratio, res["max_ratio"])
        min_margin = min(min_margin, res["min_margin"])
        if res["failures"] and example is None:
            example = {"n_bound": n_bound, "grid_step": RATIO_GRID_STEP}
    reports.append({"name": "ratio_variance_bound", "trials": total_points,
                    "failures": failures, "worst_margin": float(min_margin),
                    "max_ratio": max_ratio, "grid_bounds": list(RATIO_GRID_BOUNDS),
                    "example_failure": example})

    rng = root.spawn("decomposition")
    worst_err = 0.0
    failures = 0
    example = None
    for _ in range(trials):
        for maker, indep in ((_joint_values, False), (_product_values, True)):
            q, P, Phat = maker(rng)
            lhs, rhs, gap, cov = check_variance_decomposition(q, P, Phat)
            err = abs(gap - (-2.0 * cov))
            if indep:
                err = max(err, abs(lhs - rhs))
            worst_err = max(worst_err, err)
            bad = err > IDENTITY_TOL
            if corrupt == "variance_decomposition":
                bad = not bad
            if bad:
                failures += 1
                if example is None:
                    example = {"q": q.tolist(), "P": P.tolist(),
                               "Phat": Phat.tolist(), "gap": gap, "cov": cov}
    reports.append({"name": "variance_decomposition", "trials": 2 * trials,
                    "failures": failures, "worst_margin": IDENTITY_TOL - worst_err,
                    "max_abs_err": worst_err, "example_failure": example})

    rng = root.spawn("final_bound")
    min_margin = np.inf
    max_tight = 0.0
    failures = 0
    example = None
    for _ in range(trials):
        n_bound = float(rng.integers(1, 6))
        m = int(rng.integers(2, 13))
        q = _random_dist(rng, m)
        Phat = rng.uniform(1.0 / (n_bound + 1.0), 1.0, m)
        lhs, rhs, holds, tight = check_final_bound(q, Phat, n_bound)
        min_margin = min(min_margin, rhs - lhs)
        max_tight = max(max_tight, tight)
        if corrupt == "final_bound":
            holds = not holds
        if not holds:
            failures += 1
            if example is None:
                example = {"q": q.tolist(), "Phat": Phat.tolist(),
                           "n_bound": n_bound, "lhs": lhs, "rhs": rhs}
    reports.append({"name": "final_bound", "trials": trials, "failures": failures,
                    "worst_margin": float(min_margin), "max_tightness": max_tight,
                    "ps_over_pds_factor": 1.0, "example_failure": example})

    return reports
