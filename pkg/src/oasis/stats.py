"""Streaming exponential statistics and the selection-threshold solver."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

EPS = 1e-8


@dataclass(frozen=True)
class StreamStats:
    """Exponential moving average ``mu`` and variance ``var`` of batch-mean
    informativeness."""

    mu: float
    var: float
    alpha: float = 0.9
    batches_seen: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.var < 0.0:
            raise ValueError(f"var must be non-negative, got {self.var}")


def init_stats(values, alpha: float = 0.9) -> StreamStats:
    """Seed statistics from the first batch: its mean and (floored) sample variance."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot initialise statistics from an empty batch")
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite informativeness value")
    var = float(np.var(values, ddof=1)) if values.size > 1 else 0.0
    return StreamStats(mu=float(np.mean(values)), var=max(var, EPS),
                       alpha=alpha, batches_seen=1)


def update_stats(stats: StreamStats, batch_mean: float) -> StreamStats:
    """One EMA/EMV step. The variance term deviates from the *previous* mean."""
    if not math.isfinite(batch_mean):
        raise ValueError(f"batch mean must be finite, got {batch_mean}")
    a = stats.alpha
    mu = a * batch_mean + (1.0 - a) * stats.mu
    dev = batch_mean - stats.mu
    var = a * dev * dev + (1.0 - a) * stats.var
    return replace(stats, mu=mu, var=var, batches_seen=stats.batches_seen + 1)


def z_normalize(value, stats: StreamStats, by_variance: bool = False):
    """Relative informativeness ``(I - mu) / scale``.

    ``scale`` is the EMA standard deviation, or the raw EMV when
    ``by_variance`` is set; either is floored at ``EPS``. Accepts scalars or
    arrays.
    """
    value = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(value)):
        raise ValueError("non-finite informativeness value")
    scale = stats.var if by_variance else math.sqrt(stats.var)
    out = (value - stats.mu) / max(scale, EPS)
    return float(out) if out.ndim == 0 else out


def gate_probability(relative, threshold: float, slope: float = 2.0):
    """Selection probability ``sigmoid(slope * (relative - threshold))``."""
    return expit(slope * (np.asarray(relative, dtype=np.float64) - threshold))


@dataclass(frozen=True)
class ThresholdSolverConfig:
    grid_half_width: float = 8.0
    grid_points: int = 4001
    tolerance: float = 1e-6
    max_bisection_iters: int = 200
    gate_slope: float = 2.0

    def __post_init__(self):
        if self.grid_half_width <= 0:
            raise ValueError("grid_half_width must be positive")
        if self.grid_points < 3 or self.grid_points % 2 == 0:
            raise ValueError("grid_points must be odd and at least 3")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_bisection_iters < 1:
            raise ValueError("max_bisection_iters must be positive")
        if self.gate_slope <= 0:
            raise ValueError("gate_slope must be positive")

    def grid(self) -> np.ndarray:
        return np.linspace(-self.grid_half_width, self.grid_half_width, self.grid_points)


def expected_selection_rate(threshold: float,
                            cfg: ThresholdSolverConfig = ThresholdSolverConfig()) -> float:
    """Expected gate probability when the relative informativeness is N(0, 1).

    Trapezoid rule over a symmetric grid.
    """
    z = cfg.grid()
    density = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    integrand = gate_probability(z, threshold, cfg.gate_slope) * density
    h = z[1] - z[0]
    return float(h * (integrand.sum() - 0.5 * (integrand[0] + integrand[-1])))


def solve_threshold(ratio: float,
                    cfg: ThresholdSolverConfig = ThresholdSolverConfig()) -> float:
    """Threshold whose expected selection rate equals ``ratio`` (bisection)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"target ratio must lie in (0, 1), got {ratio}")
    lo, hi = -cfg.grid_half_width, cfg.grid_half_width
    f_lo = expected_selection_rate(lo, cfg) - ratio
    f_hi = expected_selection_rate(hi, cfg) - ratio
    # f is decreasing: positive at the left end, negative at the right
    if f_lo < 0 or f_hi > 0:
        raise ValueError(f"ratio {ratio} is not bracketed by [{lo}, {hi}]")
    mid = 0.5 * (lo + hi)
    for _ in range(cfg.max_bisection_iters):
        mid = 0.5 * (lo + hi)
        err = expected_selection_rate(mid, cfg) - ratio
        if abs(err) <= cfg.tolerance:
            return mid
        if err > 0:
            lo = mid
        else:
            hi = mid
    if abs(expected_selection_rate(mid, cfg) - ratio) > cfg.tolerance:
        raise RuntimeError(f"bisection did not converge for ratio {ratio}")
    return mid
