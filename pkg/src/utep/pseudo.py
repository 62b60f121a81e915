"""Threshold-based positive/negative pseudo-label selection.

Classes with predicted probability >= beta become positive candidates
(h); classes with probability <= gamma become negative candidates (l).
Both boundaries are inclusive. Selection is stateless: it depends only
on the current probabilities and the two thresholds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ConfigError(f"beta must be in (0, 1), got {beta}")
    return beta


def select_positive(g: np.ndarray, beta: float) -> np.ndarray:
    """h[c] = 1 where g[c] >= beta; float {0, 1} matrix like g."""
    beta = _check_beta(beta)
    g = np.asarray(g, dtype=np.float64)
    return (g >= beta).astype(np.float64)


def select_negative(g: np.ndarray, gamma: float, beta: float) -> np.ndarray:
    """l[c] = 1 where g[c] <= gamma; requires gamma < beta for disjointness."""
    beta = _check_beta(beta)
    gamma = float(gamma)
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"gamma must be in (0, 1), got {gamma}")
    if gamma >= beta:
        raise ConfigError(f"gamma must be < beta, got gamma={gamma} beta={beta}")
    g = np.asarray(g, dtype=np.float64)
    return (g <= gamma).astype(np.float64)


@dataclass
class PseudoLabelSet:
    """Positive/negative selections for one batch of probabilities."""
    g: np.ndarray
    h: np.ndarray
    l: np.ndarray
    beta: float
    gamma: float

    @classmethod
    def build(cls, g: np.ndarray, beta: float, gamma: float) -> "PseudoLabelSet":
        return cls(g=np.asarray(g, dtype=np.float64),
                   h=select_positive(g, beta),
                   l=select_negative(g, gamma, beta),
                   beta=float(beta), gamma=float(gamma))

    def rows(self, s: np.ndarray) -> list[tuple]:
        """(sample_id, argmax class, g_max, h count, l count, s) per sample."""
        out = []
        for i in range(self.g.shape[0]):
            out.append((i, int(self.g[i].argmax()), float(self.g[i].max()),
                        int(self.h[i].sum()), int(self.l[i].sum()), float(s[i])))
        return out
