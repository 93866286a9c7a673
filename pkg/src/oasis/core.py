"""Domain types and primitive gradient operations.

Gradients are plain 1-D ``float64`` numpy arrays; :func:`as_gradient` is the
single validation point for them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

GradientVector = np.ndarray


def as_gradient(values) -> GradientVector:
    """Return ``values`` as a finite 1-D float64 array, or raise ValueError."""
    g = np.asarray(values, dtype=np.float64)
    if g.ndim != 1 or g.size == 0:
        raise ValueError(f"gradient must be a non-empty 1-D array, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient has non-finite components")
    return g


@dataclass(frozen=True, eq=False)
class Sample:
    id: int
    features: np.ndarray
    label: int
    task_id: int

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"sample id must be non-negative, got {self.id}")
        if self.task_id < 0:
            raise ValueError(f"task_id must be non-negative, got {self.task_id}")
        if self.label < 0:
            raise ValueError(f"label must be non-negative, got {self.label}")


@dataclass(frozen=True)
class Batch:
    timestep: int
    samples: tuple

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def ids(self) -> list:
        return [s.id for s in self.samples]

    def features(self) -> np.ndarray:
        return np.stack([s.features for s in self.samples])

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)


@dataclass(frozen=True)
class ScoredSample:
    """Per-sample trace of one selection step."""

    sample_id: int
    informativeness: float
    adjusted: float
    relative: float
    gate_probability: float
    selected: bool


def informativeness(g) -> float:
    """Squared Euclidean norm of a gradient, i.e. ``tr(g g^T)``."""
    g = as_gradient(g)
    total = 0.0
    for x in g.tolist():
        total += x * x
    return total


def batch_informativeness(grads: np.ndarray) -> np.ndarray:
    """Row-wise squared norms of an ``(n, dim)`` gradient matrix."""
    grads = np.asarray(grads, dtype=np.float64)
    if not np.all(np.isfinite(grads)):
        raise ValueError("gradient has non-finite components")
    return np.einsum("ij,ij->i", grads, grads)


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two gradients.

    Zero vectors carry no direction, so any cosine involving one is 0.
    """
    a = as_gradient(a)
    b = as_gradient(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    sa = np.max(np.abs(a))
    sb = np.max(np.abs(b))
    if sa == 0.0 or sb == 0.0:
        return 0.0
    # rescale first so tiny or huge magnitudes do not under/overflow the norms
    a = a / sa
    b = b / sb
    c = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return min(1.0, max(-1.0, c))


def mean_gradient(grads: Sequence) -> GradientVector:
    if len(grads) == 0:
        raise ValueError("mean of an empty gradient set is undefined")
    arrs = [as_gradient(g) for g in grads]
    dim = arrs[0].size
    for g in arrs:
        if g.size != dim:
            raise ValueError(f"dimension mismatch: {dim} vs {g.size}")
    return np.mean(np.stack(arrs), axis=0)


def unit_rows(grads: np.ndarray) -> np.ndarray:
    """Rows scaled to unit norm; zero rows stay zero."""
    grads = np.asarray(grads, dtype=np.float64)
    norms = np.linalg.norm(grads, axis=-1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return np.where(norms > 0.0, grads / safe, 0.0)
