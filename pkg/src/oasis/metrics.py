"""Continual-learning accuracies, diversity density, normality diagnostics
and abstract cost counters."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import norm


def _rows(acc_matrix):
    rows = [np.asarray(r, dtype=np.float64) for r in acc_matrix]
    if not rows or any(r.size == 0 for r in rows):
        raise ValueError("accuracy matrix must have at least one non-empty row")
    return rows


def a_last(acc_matrix) -> float:
    """Mean accuracy over all tasks at the final boundary."""
    return float(np.mean(_rows(acc_matrix)[-1]))


def a_avg(acc_matrix) -> float:
    """Mean over boundaries of the mean accuracy on tasks seen so far."""
    return float(np.mean([r.mean() for r in _rows(acc_matrix)]))


def density(points, bandwidth=None) -> float:
    """Mean pairwise Gaussian-kernel similarity; lower means more diverse.

    The bandwidth defaults to the median pairwise distance (floored at 1e-8).
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("density needs at least two points")
    d = pdist(x)
    if bandwidth is None:
        h = max(float(np.median(d)), 1e-8)
    else:
        if bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {bandwidth}")
        h = float(bandwidth)
    return float(np.mean(np.exp(-(d * d) / (2.0 * h * h))))


def normality_diagnostic(values) -> dict:
    """Skewness, excess kurtosis and max QQ deviation against N(0, 1).

    A report, not a test: nothing here decides pass or fail.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size < 20:
        raise ValueError(f"need at least 20 values, got {x.size}")
    centred = x - x.mean()
    m2 = np.mean(centred ** 2)
    if m2 <= 0.0:
        raise ValueError("zero-variance input has no shape statistics")
    skew = np.mean(centred ** 3) / m2 ** 1.5
    kurt = np.mean(centred ** 4) / m2 ** 2 - 3.0
    z = np.sort(centred / np.sqrt(m2))
    q = norm.ppf((np.arange(1, x.size + 1) - 0.5) / x.size)
    return {"skewness": float(skew), "excess_kurtosis": float(kurt),
            "qq_max_abs_deviation": float(np.max(np.abs(z - q)))}


@dataclass
class CostCounters:
    """Abstract operation counts standing in for FLOPs."""

    forward: int = 0
    last_layer_grad: int = 0
    backward: int = 0

    def add(self, forward: int = 0, last_layer_grad: int = 0, backward: int = 0) -> None:
        if min(forward, last_layer_grad, backward) < 0:
            raise ValueError("counters only increase")
        self.forward += forward
        self.last_layer_grad += last_layer_grad
        self.backward += backward

    def as_dict(self) -> dict:
        return asdict(self)


def mean_std(values) -> tuple:
    """Mean and sample standard deviation (0 for a single value)."""
    v = np.asarray(values, dtype=np.float64)
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return float(np.mean(v)), std
