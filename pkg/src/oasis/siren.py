"""Similarity-aware redundancy elimination over one batch.

Samples are moved greedily into a "seen" set ``H`` by their current adjusted
informativeness. After each move, every remaining sample is re-scored from its
original value::

    adj_i = I_i + sum over U subset of H, 1 <= |U| <= max_order of
                 (-1)^|U| * cos(g_i, mean_grad(U)) * mean_I(U)

The ``|U| = 1`` terms are the first-order discount; larger subsets are the
inclusion-exclusion corrections. A sample's adjusted value is frozen when it
enters ``H``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np



@dataclass(frozen=True)
class SirenConfig:
    enabled: bool = True
    max_order: int = 3
    exact_mode: bool = False

    def __post_init__(self):
        if self.max_order < 1:
            raise ValueError(f"max_order must be >= 1, got {self.max_order}")


def _check_inputs(info, grads):
    info = np.asarray(info, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if info.ndim != 1 or info.size == 0:
        raise ValueError("informativeness must be a non-empty 1-D sequence")
    if grads.ndim != 2 or grads.shape[0] != info.size:
        raise ValueError(
            f"expected {info.size} gradients of equal dimension, got shape {grads.shape}")
    if np.any(info < 0):
        raise ValueError("informativeness values must be non-negative")
    if not (np.all(np.isfinite(info)) and np.all(np.isfinite(grads))):
        raise ValueError("non-finite input")
    return info, grads


def adjust_batch(info, grads, cfg: SirenConfig = SirenConfig()):
    """Return ``(adjusted, pick_order)`` for a batch.

    ``adjusted`` is in input order; ``pick_order`` lists sample indices in the
    order they entered ``H`` (argmax ties go to the lowest index).
    """
    info, grads = _check_inputs(info, grads)
    n = info.size
    if not cfg.enabled:
        return info.copy(), [int(i) for i in np.argsort(-info, kind="stable")]

    order_cap = n if cfg.exact_mode else cfg.max_order
    # Subset gradient sums are 0/1 combinations of the batch gradients, so every
    # cosine follows from the Gram matrix without touching the gradient dimension.
    gram = grads @ grads.T
    norms = np.sqrt(np.diag(gram))
    tiny = 1e-300

    members = np.empty((0, n))  # one 0/1 row per subset U of H
    cos_blocks: list[np.ndarray] = []
    weight_blocks: list[np.ndarray] = []

    adjusted = info.copy()
    remaining = np.ones(n, dtype=bool)
    picks: list[int] = []
    while len(picks) < n:
        cand = np.flatnonzero(remaining)
        new = int(cand[np.argmax(adjusted[cand])])
        picks.append(new)
        remaining[new] = False
        if not remaining.any():
            break

        unit = np.zeros(n)
        unit[new] = 1.0
        grow = members.sum(axis=1) < order_cap
        fresh = np.vstack([unit[None], members[grow] + unit])
        members = np.vstack([members, fresh])

        size = fresh.sum(axis=1)
        dots = fresh @ gram  # (subset, sample): g_i . sum_U
        sum_norm = np.sqrt(np.maximum(np.einsum("sj,sj->s", dots, fresh), 0.0))
        denom = np.outer(norms, sum_norm)
        cos = np.divide(dots.T, denom, out=np.zeros_like(denom), where=denom > tiny)
        cos_blocks.append(np.clip(cos, -1.0, 1.0))
        weight_blocks.append(np.where(size % 2 == 0, 1.0, -1.0) * (fresh @ info) / size)

        rest = np.flatnonzero(remaining)
        correction = np.zeros(rest.size)
        for c, w in zip(cos_blocks, weight_blocks):
            correction += c[rest] @ w
        adjusted[rest] = info[rest] + correction
    return adjusted, picks


def _cos(a, b):
    dot = 0.0
    na = 0.0
    nb = 0.0
    for x, y in zip(a, b):
        dot += x * y
        na += x * x
        nb += y * y
    if na == 0.0 or nb == 0.0:
        return 0.0
    return max(-1.0, min(1.0, dot / (math.sqrt(na) * math.sqrt(nb))))


def brute_force_oracle(info, grads, max_size: int = 12):
    """Reference implementation by direct enumeration of every subset of H.

    Pure Python, no order cap, no caching; limited to ``max_size`` samples.
    """
    info = [float(x) for x in info]
    grads = [[float(x) for x in g] for g in grads]
    n = len(info)
    if n > max_size:
        raise ValueError(f"brute-force oracle limited to {max_size} samples, got {n}")
    if len(grads) != n:
        raise ValueError("length mismatch between informativeness and gradients")
    dim = len(grads[0]) if n else 0
    if any(len(g) != dim for g in grads):
        raise ValueError("dimension mismatch")

    adjusted = list(info)
    seen: list[int] = []
    while len(seen) < n:
        best = None
        for i in range(n):
            if i in seen:
                continue
            if best is None or adjusted[i] > adjusted[best]:
                best = i
        seen.append(best)
        for i in range(n):
            if i in seen:
                continue
            value = info[i]
            for h in seen:
                value -= _cos(grads[i], grads[h]) * info[h]
            for size in range(2, len(seen) + 1):
                sign = (-1.0) ** size
                for subset in itertools.combinations(seen, size):
                    mean_g = [sum(grads[u][k] for u in subset) / size for k in range(dim)]
                    mean_i = sum(info[u] for u in subset) / size
                    value += sign * _cos(grads[i], mean_g) * mean_i
            adjusted[i] = value
    return adjusted, seen
