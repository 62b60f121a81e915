"""Desk-scale adversarial domain adaptation lab.

Trains a small feature extractor / classifier / domain discriminator
stack with gradient reversal, optionally weighting the adversarial game
by Monte-Carlo dropout uncertainty of the discriminator, regularizing
discriminator confidence, and self-training on confidence-gated pseudo
labels. A separate theory module numerically audits the bound chain the
method rests on. Everything is float64 numpy on a tiny built-in reverse
mode engine; hot kernels are JIT-compiled when numba is importable
(select with UTEP_BACKEND=numpy|numba).
"""
from .backend import active_backend
from .errors import (ConfigError, NanAbortError, NonFiniteError, ShapeError,
                     UtepError)
from .ndgrad import Node, RngStream, backward, gradcheck, zero_grad
from .nets import ModelBundle, grl_lambda, load_checkpoint, save_checkpoint
from .synthdata import (DomainPair, Pool, balance_upsample, gen_gaussian_blobs,
                        gen_two_moons_shift, load_csv, make_splits, save_csv)
from .trainer import ExperimentConfig, MetricsLog, evaluate, load_config, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DomainPair", "ExperimentConfig", "MetricsLog",
    "ModelBundle", "NanAbortError", "Node", "NonFiniteError", "Pool",
    "RngStream", "ShapeError", "UtepError", "active_backend",
    "backward", "balance_upsample", "evaluate", "gen_gaussian_blobs",
    "gen_two_moons_shift", "gradcheck", "grl_lambda", "load_checkpoint",
    "load_config", "load_csv", "make_splits", "save_checkpoint", "save_csv",
    "train", "zero_grad", "__version__",
]
