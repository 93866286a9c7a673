"""Online selection: the four-stage OASIS step and simplified baselines.

Baselines are deliberately small analogs of the methods they are named after:

* ``random_select``: uniform k-subset.
* ``topk_norm_select``: deterministic top-k by squared gradient norm (GradNorm
  ranks by magnitude; here without any importance reweighting).
* ``greedy_orthogonal_select``: Gram-Schmidt residual-norm greedy pick, a
  stand-in for orthogonalized-representativeness selection (no learned
  feature space, gradients are the representation).
* ``LossPruneSelector``: InfoBatch-style soft pruning of below-mean-loss
  samples, without its annealing and gradient rescaling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Batch, ScoredSample, batch_informativeness
from .siren import SirenConfig, adjust_batch
from .stats import (EPS, StreamStats, ThresholdSolverConfig, gate_probability,
                    init_stats, solve_threshold, update_stats, z_normalize)

GATING_MODES = ("per_sample_bernoulli", "shared_threshold")
STATS_SOURCES = ("raw", "adjusted")


@dataclass(frozen=True)
class SelectorConfig:
    target_ratio: float = 0.25
    threshold: Optional[float] = None  # solved from target_ratio when None
    alpha: float = 0.9
    gating_mode: str = "per_sample_bernoulli"
    siren: SirenConfig = field(default_factory=SirenConfig)
    normalize_by_variance: bool = False
    gate_slope: float = 2.0
    controller_gain: Optional[float] = None
    stats_source: str = "raw"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.target_ratio < 1.0:
            raise ValueError(f"target_ratio must lie in (0, 1), got {self.target_ratio}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.gating_mode not in GATING_MODES:
            raise ValueError(f"gating_mode must be one of {GATING_MODES}, got {self.gating_mode!r}")
        if self.stats_source not in STATS_SOURCES:
            raise ValueError(f"stats_source must be one of {STATS_SOURCES}, got {self.stats_source!r}")
        if self.gate_slope <= 0:
            raise ValueError(f"gate_slope must be positive, got {self.gate_slope}")
        if self.controller_gain is not None and self.controller_gain <= 0:
            raise ValueError(f"controller_gain must be positive, got {self.controller_gain}")

    def resolved_threshold(self) -> float:
        if self.threshold is not None:
            return float(self.threshold)
        return solve_threshold(self.target_ratio, ThresholdSolverConfig(gate_slope=self.gate_slope))


@dataclass(frozen=True)
class SelectionDecision:
    timestep: int
    scored: tuple
    selected_ids: tuple
    stats_after: StreamStats
    threshold: float
    realized_ratio_so_far: float


def oasis_select(batch: Batch, grads, stats: Optional[StreamStats], cfg: SelectorConfig,
                 rng: np.random.Generator, threshold: Optional[float] = None,
                 seen_before: int = 0, selected_before: int = 0):
    """Score, de-duplicate, normalise and gate one batch.

    ``stats`` is ``None`` for the first batch, which is then normalised
    against its own mean and variance. Statistics are updated after the
    selection from the batch-mean raw informativeness (or the adjusted one if
    ``cfg.stats_source == "adjusted"``).

    Returns ``(decision, new_stats)``.
    """
    grads = np.asarray(grads, dtype=np.float64)
    if grads.ndim != 2 or grads.shape[0] != len(batch):
        raise ValueError(f"expected {len(batch)} gradients, got array of shape {grads.shape}")
    if threshold is None:
        threshold = cfg.resolved_threshold()

    info = batch_informativeness(grads)
    adjusted, _ = adjust_batch(info, grads, cfg.siren)
    source = info if cfg.stats_source == "raw" else adjusted

    if stats is None:
        current = init_stats(source, cfg.alpha)
    else:
        current = stats
    relative = z_normalize(adjusted, current, cfg.normalize_by_variance)
    probs = gate_probability(relative, threshold, cfg.gate_slope)

    if cfg.gating_mode == "per_sample_bernoulli":
        chosen = rng.random(len(batch)) < probs
    else:
        chosen = probs > rng.random()

    new_stats = current if stats is None else update_stats(current, float(np.mean(source)))

    ids = batch.ids
    scored = tuple(
        ScoredSample(ids[i], float(info[i]), float(adjusted[i]), float(relative[i]),
                     float(probs[i]), bool(chosen[i]))
        for i in range(len(batch)))
    selected = tuple(ids[i] for i in np.flatnonzero(chosen))
    seen = seen_before + len(batch)
    total_selected = selected_before + len(selected)
    decision = SelectionDecision(batch.timestep, scored, selected, new_stats, threshold,
                                 total_selected / seen)
    return decision, new_stats


def ratio_controller_step(threshold: float, gain: float, realized_ratio: float,
                          target_ratio: float) -> float:
    """Proportional threshold correction: raise it when selecting too much."""
    return threshold + gain * (realized_ratio - target_ratio)


class OasisSelector:
    """Stateful wrapper holding the stream statistics, RNG and running counts."""

    def __init__(self, cfg: SelectorConfig, rng: Optional[np.random.Generator] = None):
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.stats: Optional[StreamStats] = None
        self.threshold = cfg.resolved_threshold()
        self.n_seen = 0
        self.n_selected = 0

    @property
    def realized_ratio(self) -> float:
        return self.n_selected / self.n_seen if self.n_seen else 0.0

    def step(self, batch: Batch, grads) -> SelectionDecision:
        decision, self.stats = oasis_select(batch, grads, self.stats, self.cfg, self.rng,
                                            threshold=self.threshold,
                                            seen_before=self.n_seen,
                                            selected_before=self.n_selected)
        self.n_seen += len(batch)
        self.n_selected += len(decision.selected_ids)
        if self.cfg.controller_gain is not None:
            # feedback is this batch's ratio: the threshold integrates the error,
            # so the long-run rate meets the target without cumulative windup
            batch_ratio = len(decision.selected_ids) / len(batch)
            self.threshold = ratio_controller_step(self.threshold, self.cfg.controller_gain,
                                                   batch_ratio, self.cfg.target_ratio)
        return decision


def _check_k(batch, k):
    if not 0 <= k <= len(batch):
        raise ValueError(f"k must lie in [0, {len(batch)}], got {k}")


def random_select(batch: Batch, k: int, rng: np.random.Generator) -> list:
    _check_k(batch, k)
    idx = np.sort(rng.choice(len(batch), size=k, replace=False))
    ids = batch.ids
    return [ids[i] for i in idx]


def topk_norm_select(batch: Batch, grads, k: int) -> list:
    _check_k(batch, k)
    info = batch_informativeness(grads)
    order = np.argsort(-info, kind="stable")[:k]
    ids = batch.ids
    return [ids[i] for i in order]


def greedy_orthogonal_select(batch: Batch, grads, k: int) -> list:
    """Greedy pick of the largest residual after projecting out earlier picks."""
    _check_k(batch, k)
    residual = np.array(grads, dtype=np.float64)
    if residual.ndim != 2 or residual.shape[0] != len(batch):
        raise ValueError("one gradient per batch sample required")
    ids = batch.ids
    picked: list[int] = []
    available = np.ones(len(batch), dtype=bool)
    for _ in range(k):
        norms = np.einsum("ij,ij->i", residual, residual)
        norms[~available] = -np.inf
        j = int(np.argmax(norms))
        picked.append(j)
        available[j] = False
        nj = math.sqrt(norms[j])
        if nj > EPS:
            q = residual[j] / nj
            residual -= np.outer(residual @ q, q)
    return [ids[j] for j in picked]


class LossPruneSelector:
    """Drops below-running-mean-loss samples with probability ``prune_prob``.

    The running mean covers every loss seen in earlier calls; the first call
    compares against its own batch mean.
    """

    def __init__(self, prune_prob: float = 0.5):
        if not 0.0 <= prune_prob <= 1.0:
            raise ValueError(f"prune_prob must lie in [0, 1], got {prune_prob}")
        self.prune_prob = prune_prob
        self.loss_sum = 0.0
        self.loss_count = 0

    @property
    def running_mean(self) -> Optional[float]:
        return self.loss_sum / self.loss_count if self.loss_count else None

    def select(self, batch: Batch, losses: Sequence[float], rng: np.random.Generator) -> list:
        losses = np.asarray(losses, dtype=np.float64)
        if losses.shape != (len(batch),):
            raise ValueError("one loss per batch sample required")
        ref = self.running_mean if self.loss_count else float(losses.mean())
        below = losses < ref
        drop = below & (rng.random(len(batch)) < self.prune_prob)
        self.loss_sum += float(losses.sum())
        self.loss_count += losses.size
        ids = batch.ids
        return [ids[i] for i in np.flatnonzero(~drop)]


def loss_prune_select(batch: Batch, losses, prune_prob: float, rng: np.random.Generator,
                      state: Optional[LossPruneSelector] = None) -> list:
    state = state if state is not None else LossPruneSelector(prune_prob)
    return state.select(batch, losses, rng)


class BudgetSchedule:
    """Per-batch counts for fixed-count selectors averaging ``ratio`` exactly.

    Batch ``t`` gets ``round((t+1) r N) - round(t r N)`` samples, so the
    cumulative count never drifts more than half a sample from the target.
    """

    def __init__(self, ratio: float, batch_size: int):
        if not 0.0 <= ratio <= 1.0:
            raise ValueError(f"ratio must lie in [0, 1], got {ratio}")
        self.ratio = ratio
        self.batch_size = batch_size
        self.t = 0

    def next_k(self) -> int:
        per = self.ratio * self.batch_size
        k = int(round((self.t + 1) * per)) - int(round(self.t * per))
        self.t += 1
        return min(max(k, 0), self.batch_size)
