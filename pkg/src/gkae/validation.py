"""Input checks shared by the estimators and the harness."""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatch, RateOutOfRange
from .graphcore import GraphSequence

__all__ = ["check_sequence", "check_signals", "check_mask", "check_rate", "check_horizon"]


def check_sequence(seq, min_length: int = 1) -> GraphSequence:
    """Accept a GraphSequence or anything carrying one in ``.sequence``."""
    seq = getattr(seq, "sequence", seq)
    if not isinstance(seq, GraphSequence):
        raise TypeError(f"expected a GraphSequence, got {type(seq).__name__}")
    if len(seq) < min_length:
        raise DimensionMismatch(f"sequence has {len(seq)} steps, need at least {min_length}")
    return seq


def check_signals(X, n_nodes: int = None, n_steps: int = None) -> np.ndarray:
    """Finite float ``N x T`` matrix; a 1-D input is one column."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionMismatch(f"signals must be N x T, got {X.ndim} dimensions")
    if n_nodes is not None and X.shape[0] != n_nodes:
        raise DimensionMismatch(f"expected {n_nodes} nodes, got {X.shape[0]}")
    if n_steps is not None and X.shape[1] != n_steps:
        raise DimensionMismatch(f"expected {n_steps} steps, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("signals contain NaN or infinite values")
    return X


def check_mask(mask, shape=None):
    """Return a SamplingMask; a bare 0/1 matrix gets ``tau`` from its all-ones prefix."""
    from .lcrecon import SamplingMask

    if not isinstance(mask, SamplingMask):
        J = np.asarray(mask, dtype=float)
        if J.ndim != 2:
            raise DimensionMismatch("mask must be N x T")
        full = np.all(J == 1, axis=0)
        tau = J.shape[1] if full.all() else int(np.argmin(full))
        hidden = J[:, tau:] == 0
        rate = float(hidden.sum(axis=0).mean() / J.shape[0]) if tau < J.shape[1] else 0.0
        mask = SamplingMask(J, tau, rate)
    if shape is not None and mask.J.shape != tuple(shape):
        raise DimensionMismatch(f"mask {mask.J.shape} does not match data {tuple(shape)}")
    return mask


def check_rate(rate) -> float:
    rate = float(rate)
    if not 0.0 <= rate < 1.0:
        raise RateOutOfRange(f"masking rate {rate} outside [0, 1)")
    return rate


def check_horizon(P) -> int:
    if int(P) != P or P < 0:
        raise ValueError(f"horizon must be a non-negative integer, got {P!r}")
    return int(P)
