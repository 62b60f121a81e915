"""Time the numba kernels against the pure-numpy fallback.

Runs each kernel on training-shaped arrays plus one end-to-end training
block per backend. Usage: python benchmarks/bench_backend.py [--repeat N].
numba results include a warm-up call so JIT compilation stays out of
the measured loop.
"""
import argparse
import importlib
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "src"))

from utep import _kernels_numpy as knp  # noqa: E402

try:
    from utep import _kernels_numba as knb
except ImportError:
    knb = None

KERNEL_CASES = [
    ("matmul", lambda k, d: k.matmul(d["a"], d["b"])),
    ("matmul_nt", lambda k, d: k.matmul_nt(d["g"], d["b"])),
    ("matmul_tn", lambda k, d: k.matmul_tn(d["a"], d["g"])),
    ("relu_fwd", lambda k, d: k.relu_fwd(d["h"])),
    ("relu_bwd", lambda k, d: k.relu_bwd(d["h"], d["gh"])),
    ("sigmoid_fwd", lambda k, d: k.sigmoid_fwd(d["h"])),
    ("sigmoid_bwd", lambda k, d: k.sigmoid_bwd(d["s"], d["gh"])),
    ("softmax_fwd", lambda k, d: k.softmax_fwd(d["h"])),
    ("softmax_bwd", lambda k, d: k.softmax_bwd(d["p"], d["gh"])),
    ("log_floor_fwd", lambda k, d: k.log_floor_fwd(d["p"], 1e-12)),
    ("log_floor_bwd", lambda k, d: k.log_floor_bwd(d["p"], d["gh"], 1e-12)),
    ("exp_fwd", lambda k, d: k.exp_fwd(d["h"])),
    ("dropout_scale", lambda k, d: k.dropout_scale(d["h"], d["mask"], 0.5)),
    ("colsum", lambda k, d: k.colsum(d["g"])),
    ("sgd_update", lambda k, d: k.sgd_update(d["theta"], d["vel"], d["gw"],
                                             0.01, 0.9)),
]


def make_data(rng):
    h = rng.normal(size=(256, 64))
    p = knp.softmax_fwd(h)
    return {
        "a": rng.normal(size=(256, 64)),
        "b": rng.normal(size=(64, 32)),
        "g": rng.normal(size=(256, 32)),
        "h": h,
        "gh": rng.normal(size=(256, 64)),
        "s": knp.sigmoid_fwd(h),
        "p": p,
        "mask": (rng.random((256, 64)) < 0.5).astype(np.float64),
        "theta": rng.normal(size=(256, 64)),
        "vel": np.zeros((256, 64)),
        "gw": rng.normal(size=(256, 64)),
    }


def time_case(fn, kernels, data, repeat):
    fn(kernels, data)  # warm-up (numba compiles or loads its cache here)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(kernels, data)
    return (time.perf_counter() - t0) / repeat


def bench_kernels(repeat):
    rows = []
    for name, fn in KERNEL_CASES:
        entry = {"kernel": name}
        for label, mod in (("numpy", knp), ("numba", knb)):
            if mod is None:
                continue
            entry[label] = time_case(fn, mod, make_data(np.random.default_rng(0)),
                                     repeat)
        rows.append(entry)
    return rows


def bench_training(backend, epochs=20):
    """Wall time of a short real training run under one backend."""
    os.environ["UTEP_BACKEND"] = backend
    for mod in [m for m in list(sys.modules) if m.startswith("utep")]:
        del sys.modules[mod]
    trainer = importlib.import_module("utep.trainer")
    cfg = trainer.ExperimentConfig(n_per_domain=200, epochs=epochs, seed=0,
                                   out_dir="")
    trainer.train(cfg)  # warm-up
    t0 = time.perf_counter()
    trainer.train(cfg)
    return time.perf_counter() - t0


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    parser.add_argument("--epochs", type=int, default=20,
                        help="epochs for the end-to-end timing")
    args = parser.parse_args()

    print(f"{'kernel':<16} {'numpy us':>10} {'numba us':>10} {'speedup':>8}")
    for row in bench_kernels(args.repeat):
        np_us = row["numpy"] * 1e6
        if "numba" in row:
            nb_us = row["numba"] * 1e6
            print(f"{row['kernel']:<16} {np_us:>10.1f} {nb_us:>10.1f} "
                  f"{np_us / nb_us:>7.2f}x")
        else:
            print(f"{row['kernel']:<16} {np_us:>10.1f} {'n/a':>10} {'n/a':>8}")

    print()
    backends = ["numpy"] + (["numba"] if knb is not None else [])
    for backend in backends:
        secs = bench_training(backend, args.epochs)
        print(f"training ({args.epochs} epochs, n=200) backend={backend}: "
              f"{secs:.2f}s")


if __name__ == "__main__":
    main()
