"""Kernel backend selection.

The env var ``UTEP_BACKEND`` picks the compute kernels:

* ``numba``  - JIT-compiled kernels (default when numba imports cleanly)
* ``numpy``  - pure-numpy reference kernels

Both expose the same functions; everything above this module is backend
agnostic. ``active_backend()`` reports which one won.
"""
from __future__ import annotations

import logging
import os

from .errors import ConfigError

log = logging.getLogger("utep.backend")

_VALID = ("numba", "numpy")


def _select() -> object:
    requested = os.environ.get("UTEP_BACKEND", "").strip().lower()
    if requested and requested not in _VALID:
        raise ConfigError(
            f"UTEP_BACKEND={requested!r} is not valid; choose one of {_VALID}"
        )
    if requested == "numpy":
        from . import _kernels_numpy as mod
        return mod
    if requested == "numba":
        from . import _kernels_numba as mod
        return mod
    try:
        from . import _kernels_numba as mod
        return mod
    except ImportError:
        log.info("numba unavailable, falling back to numpy kernels")
        from . import _kernels_numpy as mod
        return mod


_impl = _select()

BACKEND_NAME: str = _impl.BACKEND_NAME

matmul = _impl.matmul
matmul_nt = _impl.matmul_nt
matmul_tn = _impl.matmul_tn
relu_fwd = _impl.relu_fwd
relu_bwd = _impl.relu_bwd
sigmoid_fwd = _impl.sigmoid_fwd
sigmoid_bwd = _impl.sigmoid_bwd
softmax_fwd = _impl.softmax_fwd
softmax_bwd = _impl.softmax_bwd
log_floor_fwd = _impl.log_floor_fwd
log_floor_bwd = _impl.log_floor_bwd
exp_fwd = _impl.exp_fwd
dropout_scale = _impl.dropout_scale
colsum = _impl.colsum
sgd_update = _impl.sgd_update


def active_backend() -> str:
    """Name of the kernel set in use, ``numba`` or ``numpy``."""
    return BACKEND_NAME


def warmup() -> None:
    """Precompile JIT kernels if the backend has any; no-op otherwise."""
    fn = getattr(_impl, "warmup", None)
    if fn is not None:
        fn()
