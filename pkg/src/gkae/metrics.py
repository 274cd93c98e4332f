"""Forecast and reconstruction error metrics.

Prediction metrics use per-step vector norms over nodes, averaged over the
horizon.
"""

import numpy as np

from .exceptions import DimensionMismatch, EmptyScope

__all__ = ["rmse_pred", "mae_pred", "epsilon_recon", "per_step_mse"]


def _pair(truth, pred, P=None):
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.ndim == 1:
        truth, pred = truth[:, None], pred.reshape(-1, 1)
    if truth.shape != pred.shape:
        raise DimensionMismatch(f"truth {truth.shape} vs prediction {pred.shape}")
    if P is not None:
        if P > truth.shape[1]:
            raise DimensionMismatch(f"horizon {P} exceeds {truth.shape[1]} columns")
        truth, pred = truth[:, :P], pred[:, :P]
    if truth.shape[1] == 0:
        raise DimensionMismatch("empty horizon")
    return truth, pred


def rmse_pred(truth, pred, P=None) -> float:
    """``sqrt(mean_p ||x(p) - xhat(p)||_2^2)`` over N x P matrices."""
    truth, pred = _pair(truth, pred, P)
    err = truth - pred
    return float(np.sqrt(np.mean(np.sum(err * err, axis=0))))


def mae_pred(truth, pred, P=None) -> float:
    """``mean_p ||x(p) - xhat(p)||_1`` over N x P matrices."""
    truth, pred = _pair(truth, pred, P)
    return float(np.mean(np.sum(np.abs(truth - pred), axis=0)))


def epsilon_recon(truth, estimate, J, tau: int, scope: str = "masked") -> float:
    """Squared error over ``t >= tau`` entries in scope, divided by ``T - tau - 1``.

    ``scope="masked"`` scores hidden entries (J == 0); ``"observed"`` scores
    entries with J == 1.
    """
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    J = np.asarray(getattr(J, "J", J))
    if truth.shape != estimate.shape or truth.shape != J.shape:
        raise DimensionMismatch(f"shapes {truth.shape}, {estimate.shape}, {J.shape}")
    T = truth.shape[1]
    if T - tau - 1 <= 0:
        raise DimensionMismatch(f"tau={tau} leaves fewer than two test steps")
    if scope == "masked":
        sel = J[:, tau:] == 0
    elif scope == "observed":
        sel = J[:, tau:] == 1
    else:
        raise ValueError(f"unknown scope {scope!r}")
    if not sel.any():
        raise EmptyScope(f"no {scope} entries at t >= {tau}")
    err = (truth[:, tau:] - estimate[:, tau:]) ** 2
    return float(err[sel].sum() / (T - tau - 1))


def per_step_mse(truth, estimate, J=None) -> np.ndarray:
    """Mean squared error per column, over hidden entries when ``J`` is given."""
    truth = np.asarray(truth, dtype=float)
    err = (truth - np.asarray(estimate, dtype=float)) ** 2
    if J is None:
        return err.mean(axis=0)
    sel = np.asarray(getattr(J, "J", J)) == 0
    counts = sel.sum(axis=0)
    sums = np.where(sel, err, 0.0).sum(axis=0)
    return np.divide(sums, counts, out=np.full(err.shape[1], np.nan), where=counts > 0)
