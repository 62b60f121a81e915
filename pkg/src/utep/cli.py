"""Command-line entry point.

Subcommands: run (one experiment), sweep (Cartesian product of config
overrides), verify-theory (numerical bound checks), gradcheck (finite-
difference audit of the autodiff engine), gen-data (emit a dataset CSV).
Exit codes: run returns 2 on config errors and 3 on NaN aborts;
verify-theory returns 1 when any check fails; sweep returns 1 when any
sub-run failed; gradcheck returns 1 above the error threshold.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
import time
from multiprocessing import get_context

import numpy as np

from . import ndgrad as nd
from . import theorylab
from .backend import active_backend
from .errors import ConfigError, NanAbortError, UtepError
from .losses import (assemble_adversarial, combine_tce, loss_adversarial_weighted,
                     loss_bias, loss_classifier, loss_nce, loss_pce, loss_total)
from .nets import (ModelBundle, class_probs, forward_discriminator,
                   forward_features, save_checkpoint)
from .ndgrad import RngStream
from .pseudo import select_negative, select_positive
from .synthdata import save_csv
from .trainer import (ExperimentConfig, build_pair, parse_config_file, train)
from .uncertainty import mc_variance_node, normalize_mu, selection_weight

log = logging.getLogger("utep.cli")

GRADCHECK_THRESHOLD = 1e-4


def _setup_logging() -> None:
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    name = os.environ.get("UTEP_LOG_LEVEL", "info").strip().lower()
    if name not in levels:
        print(f"warning: UTEP_LOG_LEVEL={name!r} not in {sorted(levels)}, "
              "using info", file=sys.stderr)
        name = "info"
    logging.basicConfig(level=levels[name],
                        format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------- run

def _load_run_config(args) -> ExperimentConfig:
    mapping = parse_config_file(args.config)
    config = ExperimentConfig.from_mapping(mapping)
    if args.seed is not None:
        config.seed = args.seed
    if getattr(args, "out", None):
        config.out_dir = args.out
    config.validate()
    return config


def _execute_run(config: ExperimentConfig, dump_uncertainty: bool = False) -> dict:
    os.makedirs(config.out_dir, exist_ok=True)
    dump_dir = (os.path.join(config.out_dir, "uncertainty")
                if dump_uncertainty else None)
    t0 = time.perf_counter()
    bundle, metrics = train(config, dump_uncertainty_dir=dump_dir)
    wall_s = time.perf_counter() - t0
    metrics.to_csv(os.path.join(config.out_dir, "metrics.csv"))
    save_checkpoint(bundle, os.path.join(config.out_dir, "checkpoint.json"))
    acc = metrics.column("target_accuracy") if metrics.rows else np.array([])
    summary = {
        "config": config.to_mapping(),
        "seed": config.seed,
        "total_steps": metrics.total_steps,
        "final_target_accuracy": float(acc[-1]) if acc.size else None,
        "final_source_accuracy": (float(metrics.rows[-1]["source_accuracy"])
                                  if metrics.rows else None),
        "final_proxy_a_distance": (float(metrics.rows[-1]["proxy_A_distance"])
                                   if metrics.rows else None),
        "best_epoch": int(acc.argmax()) if acc.size else None,
        "best_target_accuracy": float(acc.max()) if acc.size else None,
        "wall_time_s": wall_s,
    }
    with open(os.path.join(config.out_dir, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def cmd_run(args) -> int:
    try:
        config = _load_run_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        summary = _execute_run(config, dump_uncertainty=args.dump_uncertainty)
    except NanAbortError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    log.info("run complete: target accuracy %s, outputs in %s",
             summary["final_target_accuracy"], config.out_dir)
    return 0


# -------------------------------------------------------------- sweep

def _parse_overrides(items: list[str]) -> list[tuple[str, list[str]]]:
    parsed = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value[,value...]")
        key, _, values = item.partition("=")
        vals = [v.strip() for v in values.split(",") if v.strip()]
        if not vals:
            raise ConfigError(f"override {item!r} has no values")
        parsed.append((key.strip(), vals))
    return parsed


def _sweep_worker(task: dict) -> dict:
    try:
        config = ExperimentConfig.from_mapping(task["mapping"])
        summary = _execute_run(config)
        return {"run_dir": task["run_dir"], "status": "ok",
                "final_target_accuracy": summary["final_target_accuracy"],
                **task["overrides"]}
    except UtepError as exc:
        return {"run_dir": task["run_dir"], "status": f"failed: {exc}",
                "final_target_accuracy": None, **task["overrides"]}


def cmd_sweep(args) -> int:
    try:
        base = parse_config_file(args.config)
        ExperimentConfig.from_mapping(base)
        overrides = _parse_overrides(args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_root = args.out or "sweep"
    os.makedirs(out_root, exist_ok=True)
    keys = [k for k, _ in overrides]
    combos = list(itertools.product(*[vals for _, vals in overrides])) or [()]
    tasks = []
    for combo in combos:
        chosen = dict(zip(keys, combo))
        name = "__".join(f"{k}={v}" for k, v in chosen.items()) or "base"
        run_dir = os.path.join(out_root, name)
        mapping = dict(base)
        mapping.update(chosen)
        mapping["out_dir"] = run_dir
        if args.seed is not None and "seed" not in chosen:
            mapping["seed"] = str(args.seed)
        tasks.append({"mapping": mapping, "run_dir": run_dir,
                      "overrides": chosen})
    if args.jobs > 1:
        with get_context("fork").Pool(args.jobs) as pool:
            results = pool.map(_sweep_worker, tasks)
    else:
        results = [_sweep_worker(t) for t in tasks]
    agg_path = os.path.join(out_root, "sweep.csv")
    cols = ["run_dir"] + keys + ["status", "final_target_accuracy"]
    with open(agg_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for res in results:
            cells = [str(res.get(c, "")) for c in cols]
            fh.write(",".join(cells) + "\n")
    failed = [r for r in results if r["status"] != "ok"]
    for r in failed:
        log.error("sweep run %s: %s", r["run_dir"], r["status"])
    log.info("sweep complete: %d runs, %d failed, table in %s",
             len(results), len(failed), agg_path)
    return 1 if failed else 0


# ------------------------------------------------------ verify-theory

def cmd_verify_theory(args) -> int:
    try:
        reports = theorylab.run_all(args.trials, seed=args.seed,
                                    corrupt=args.corrupt)
    except UtepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    failures = sum(r["failures"] for r in reports)
    print(json.dumps({"trials": args.trials, "seed": args.seed,
                      "total_failures": failures, "checks": reports}, indent=2))
    return 0 if failures == 0 else 1


# ----------------------------------------------------------- gradcheck

def _op_fragments(seed: int) -> list[tuple[str, callable, list]]:
    """(name, rebuild-fn, params) triples, one scalar fragment per op."""
    rng = RngStream(seed, "gradcheck")

    def mat(r, c, lo=-2.0, hi=2.0, away_from=None):
        arr = rng.uniform(lo, hi, (r, c))
        if away_from is not None:
            # keep inputs off the kink so central differences stay valid
            low = np.abs(arr - away_from) < 0.05
            arr[low] = away_from + 0.25 * np.sign(arr[low] - away_from + 1e-9)
        return nd.param(arr)

    frags = []
    a, b = mat(3, 4), mat(4, 2)
    frags.append(("matmul", lambda: nd.sum(nd.matmul(a, b)), [a, b]))
    c, d = mat(3, 4), mat(3, 4)
    frags.append(("add", lambda: nd.sum(nd.add(c, d)), [c, d]))
    e, bias = mat(3, 4), mat(1, 4)
    frags.append(("add_bias", lambda: nd.sum(nd.add(e, bias)), [e, bias]))
    f, g = mat(3, 4), mat(3, 4)
    frags.append(("mul", lambda: nd.sum(nd.mul(f, g)), [f, g]))
    h = mat(3, 4, away_from=0.0)
    frags.append(("relu", lambda: nd.sum(nd.relu(h)), [h]))
    i = mat(3, 4)
    frags.append(("sigmoid", lambda: nd.sum(nd.square(nd.sigmoid(i))), [i]))
    j = mat(3, 4)
    frags.append(("softmax", lambda: nd.sum(nd.square(nd.softmax(j))), [j]))
    k = mat(3, 4, lo=0.2, hi=2.0)
    frags.append(("log", lambda: nd.sum(nd.log(k, floor=1e-12)), [k]))
    m = mat(3, 4, lo=-1.0, hi=1.0)
    frags.append(("exp", lambda: nd.sum(nd.exp(m)), [m]))
    n = mat(3, 4)
    frags.append(("square", lambda: nd.sum(nd.square(n)), [n]))
    o = mat(3, 4)
    frags.append(("mean_axis0", lambda: nd.sum(nd.square(nd.mean(o, axis=0))), [o]))
    p = mat(3, 4)
    frags.append(("mean_axis1", lambda: nd.sum(nd.square(nd.mean(p, axis=1))), [p]))
    q = mat(3, 4)
    frags.append(("sum_all", lambda: nd.square(nd.sum(q)), [q]))
    r, s = mat(2, 4), mat(3, 4)
    frags.append(("concat", lambda: nd.sum(nd.square(nd.concat([r, s]))), [r, s]))
    t = mat(3, 4)
    frags.append(("scale", lambda: nd.sum(nd.scale(t, -1.7)), [t]))
    u = mat(3, 4)
    mask = RngStream(seed, "mask").keep_mask((3, 4), 0.5)
    frags.append(("dropout", lambda: nd.sum(nd.square(nd.dropout(u, mask, 0.5))),
                  [u]))
    return frags


def _total_loss_fragment(seed: int) -> tuple[callable, list]:
    """Assembled objective on a tiny bundle with frozen masks and weights.

    Gradient reversal is left out of the checked graph (it is identity
    forward, so the loss value is unchanged); its backward rule is
    audited separately as an exact algebraic relation.
    """
    root = RngStream(seed, "gradcheck_total")
    bundle = ModelBundle(input_dim=3, num_classes=3, hidden_dim=6,
                         feature_dim=4, disc_hidden=5, dropout_rate=0.5,
                         rng=root.spawn("init"))
    data = root.spawn("data")
    x_src = data.uniform(-2.0, 2.0, (4, 3))
    x_tgt = data.uniform(-2.0, 2.0, (4, 3))
    y_src = np.array([0, 1, 2, 1])
    K = 3
    mask_rng = root.spawn("masks")
    masks_mc = [mask_rng.keep_mask((8, 5), 0.5) for _ in range(K)]
    mask_src = mask_rng.keep_mask((4, 5), 0.5)
    mask_tgt = mask_rng.keep_mask((4, 5), 0.5)

    def build_once():
        f_src = forward_features(bundle, x_src)
        f_tgt = forward_features(bundle, x_tgt)
        f_all = nd.concat([f_src, f_tgt])
        u = mc_variance_node(bundle, f_all, K, masks=masks_mc)
        return f_src, f_tgt, f_all, u

    _, _, _, u0 = build_once()
    mu_all = normalize_mu(u0.value[:, 0])
    s_tgt = selection_weight(mu_all)[4:]
    g0 = class_probs(bundle, forward_features(bundle, x_tgt)).value
    h = select_positive(g0, 0.4)
    lmask = select_negative(g0, 0.2, 0.4)

    def fn():
        f_src, f_tgt, f_all, u = build_once()
        g_src = class_probs(bundle, f_src)
        l_y = loss_classifier(g_src, y_src)
        p_s = forward_discriminator(bundle, f_src, mask=mask_src, train=True)
        p_t = forward_discriminator(bundle, f_tgt, mask=mask_tgt, train=True)
        l_dom = loss_adversarial_weighted(p_s, p_t, mu_all[:4], mu_all[4:])
        l_adv = assemble_adversarial(l_y, l_dom, 1.0)
        g_tgt = class_probs(bundle, f_tgt)
        l_tce = combine_tce(loss_pce(g_tgt, h, s_tgt),
                            loss_nce(g_tgt, lmask, s_tgt), 1.0)
        return loss_total(l_adv, loss_bias(u), l_tce, 1.0, 1.0)

    return fn, bundle.params()


def _grl_algebraic_deviation(seed: int) -> float:
    """Max |grad_with_grl + lam * grad_without| over feature params."""
    root = RngStream(seed, "grlcheck")
    bundle = ModelBundle(input_dim=3, num_classes=2, hidden_dim=5,
                         feature_dim=4, disc_hidden=4, dropout_rate=0.5,
                         rng=root.spawn("init"))
    bundle.grl_lam = 0.7
    x = root.spawn("data").uniform(-2.0, 2.0, (6, 3))
    mask = root.spawn("mask").keep_mask((6, 4), 0.5)
    grads = {}
    for use_grl in (False, True):
        f = forward_features(bundle, x)
        p = forward_discriminator(bundle, f, mask=mask, train=True, grl=use_grl)
        loss = nd.scale(nd.mean(nd.log(p, floor=1e-12)), -1.0)
        nd.zero_grad(bundle.params())
        nd.backward(loss)
        grads[use_grl] = [None if q.grad is None else q.grad.copy()
                          for q in bundle.feature_params()]
        nd.zero_grad(bundle.params())
    worst = 0.0
    for g_plain, g_rev in zip(grads[False], grads[True]):
        if g_plain is None:
            continue
        worst = max(worst, float(np.abs(g_rev + bundle.grl_lam * g_plain).max()))
    return worst


def cmd_gradcheck(args) -> int:
    rows = []
    worst = 0.0
    for name, fn, params in _op_fragments(args.seed):
        err = nd.gradcheck(fn, params)
        rows.append((name, err))
        worst = max(worst, err)
    fn, params = _total_loss_fragment(args.seed)
    err = nd.gradcheck(fn, params)
    rows.append(("total_objective", err))
    worst = max(worst, err)
    grl_dev = _grl_algebraic_deviation(args.seed)
    print(f"{'fragment':<18} {'max_rel_err':>12}")
    for name, err in rows:
        print(f"{name:<18} {err:>12.3e}")
    print(f"{'gradient_reverse':<18} {grl_dev:>12.3e}  (algebraic -lambda relation)")
    print(f"worst: {worst:.3e} (threshold {GRADCHECK_THRESHOLD:.0e}), "
          f"backend: {active_backend()}")
    ok = worst < GRADCHECK_THRESHOLD and grl_dev < 1e-12
    return 0 if ok else 1


# ------------------------------------------------------------ gen-data

def cmd_gen_data(args) -> int:
    try:
        mapping = parse_config_file(args.config)
        config = ExperimentConfig.from_mapping(mapping)
        if args.seed is not None:
            config.seed = args.seed
        pair = build_pair(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = args.out or "dataset.csv"
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_csv(pair, out)
    log.info("wrote %d source + %d target samples to %s",
             pair.source.n, pair.target.n, out)
    return 0


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="utep",
        description="Adversarial domain adaptation lab with "
                    "uncertainty-weighted transfer")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--dump-uncertainty", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="Cartesian product of overrides")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("overrides", nargs="*",
                         help="key=value[,value...] overrides")
    p_sweep.set_defaults(func=cmd_sweep)

    p_ver = sub.add_parser("verify-theory", help="numerical bound checks")
    p_ver.add_argument("--trials", type=int, default=10000)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--corrupt", default=None, help=argparse.SUPPRESS)
    p_ver.set_defaults(func=cmd_verify_theory)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_gen = sub.add_parser("gen-data", help="emit the configured dataset as CSV")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", default=None)
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.set_defaults(func=cmd_gen_data)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
