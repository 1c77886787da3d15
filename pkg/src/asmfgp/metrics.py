"""Prediction quality measures."""

from __future__ import annotations

import numpy as np

from asmfgp.errors import DimensionMismatchError

VARIANCE_FLOOR = 1e-12
SCORE_FLOOR = -5.0


def _pair(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=float).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise DimensionMismatchError(f"lengths differ: {y_true.size} vs {y_pred.size}")
    if y_true.size == 0:
        raise DimensionMismatchError("need at least one value")
    return y_true, y_pred


def rmse(y_true, y_pred) -> float:
    """Root mean squared error."""
    y_true, y_pred = _pair(y_true, y_pred)
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def score(y_true, mean, variance) -> float:
    """Mean Gaussian log predictive density.

    Variances below ``1e-12`` are lifted to it before use.
    """
    y_true, mean = _pair(y_true, mean)
    _, variance = _pair(y_true, variance)
    s2 = np.maximum(variance, VARIANCE_FLOOR)
    return float(np.mean(-0.5 * np.log(2.0 * np.pi * s2) - (y_true - mean) ** 2 / (2.0 * s2)))


def floor_scores(values, floor: float = SCORE_FLOOR):
    """Clamp scores from below for display; values above ``floor`` pass through."""
    return np.maximum(np.asarray(values, dtype=float), floor)
