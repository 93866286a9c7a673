"""Synthetic continual-learning harness.

A stream of tasks with Gaussian class-conditional features feeds an unbounded
episodic memory; every training batch is drawn from memory, scored by a
softmax-regression model (whose only layer is its last layer) and filtered by
a selector before one gradient step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from .core import Batch, Sample, batch_informativeness
from .metrics import CostCounters, a_avg, a_last, density, normality_diagnostic
from .select import (BudgetSchedule, LossPruneSelector, OasisSelector, SelectorConfig,
                     greedy_orthogonal_select, random_select, topk_norm_select)

SELECTORS = ("oasis", "random", "topk", "greedy_orthogonal", "loss_prune", "full")

# fixed spawn keys so toggling one component never shifts another's random draws
_SUBSTREAMS = {"centers": 0, "stream": 1, "test": 2, "memory": 3, "gating": 4,
               "baseline": 5, "model": 6, "density": 7}


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, _SUBSTREAMS[name]]))


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    n_samples: int
    class_ids: tuple
    centers: np.ndarray  # (len(class_ids), feature_dim)
    feature_scale: float = 1.0
    recurrence: float = 0.0  # fraction re-emitted inside the next task's segment

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError(f"task {self.task_id}: n_samples must be >= 1")
        if self.feature_scale < 0:
            raise ValueError(f"task {self.task_id}: feature_scale must be non-negative")
        if not 0.0 <= self.recurrence <= 1.0:
            raise ValueError(f"task {self.task_id}: recurrence must lie in [0, 1]")
        if np.shape(self.centers) != (len(self.class_ids), np.shape(self.centers)[-1]):
            raise ValueError(f"task {self.task_id}: one center per class required")


@dataclass(frozen=True)
class StreamConfig:
    tasks: tuple
    feature_dim: int
    n_classes: int
    batch_size: int = 16
    shuffle_within_task: bool = True
    seed: int = 0
    duplicate_fraction: float = 0.0
    duplicate_prototypes: int = 4
    duplicate_hardness: float = 0.0

    def __post_init__(self):
        if self.feature_dim < 1 or self.n_classes < 2 or self.batch_size < 1:
            raise ValueError("feature_dim >= 1, n_classes >= 2 and batch_size >= 1 required")
        for task in self.tasks:
            if any(not 0 <= c < self.n_classes for c in task.class_ids):
                raise ValueError(f"task {task.task_id} uses a class outside [0, {self.n_classes})")
            if np.shape(task.centers)[1] != self.feature_dim:
                raise ValueError(f"task {task.task_id} centers do not match feature_dim")
        if not 0.0 <= self.duplicate_fraction < 1.0:
            raise ValueError("duplicate_fraction must lie in [0, 1)")
        if self.duplicate_prototypes < 1:
            raise ValueError("duplicate_prototypes must be >= 1")
        if not 0.0 <= self.duplicate_hardness <= 1.0:
            raise ValueError("duplicate_hardness must lie in [0, 1]")


@dataclass(frozen=True)
class StreamParams:
    """Flat stream description; :meth:`build` draws the class centers."""

    task_sizes: tuple = (3000, 1000, 4000, 2000)
    classes_per_task: int = 2
    feature_dim: int = 64
    center_spread: float = 0.5
    feature_scale: float = 1.0
    batch_size: int = 16
    shuffle_within_task: bool = True
    duplicate_fraction: float = 0.0
    duplicate_prototypes: int = 4
    duplicate_hardness: float = 0.0
    recurrence: float = 0.0
    test_per_task: int = 200

    def build(self, seed: int) -> StreamConfig:
        rng = substream(seed, "centers")
        n_classes = self.classes_per_task * len(self.task_sizes)
        centers = rng.normal(0.0, self.center_spread, size=(n_classes, self.feature_dim))
        tasks = []
        for k, n in enumerate(self.task_sizes):
            cls = tuple(range(k * self.classes_per_task, (k + 1) * self.classes_per_task))
            tasks.append(TaskSpec(k, int(n), cls, centers[list(cls)], self.feature_scale,
                                  self.recurrence))
        return StreamConfig(tuple(tasks), self.feature_dim, n_classes, self.batch_size,
                            self.shuffle_within_task, seed, self.duplicate_fraction,
                            self.duplicate_prototypes, self.duplicate_hardness)


def _draw(task: TaskSpec, n: int, rng: np.random.Generator):
    which = rng.integers(0, len(task.class_ids), size=n)
    noise = rng.normal(size=(n, task.centers.shape[1]))
    feats = task.centers[which] + task.feature_scale * noise
    return feats, np.asarray(task.class_ids)[which]


def _segments(cfg: StreamConfig, rng: np.random.Generator):
    """Per-segment ``(features, labels, task_ids)`` in stream order."""
    carry = None
    segs = []
    for task in cfg.tasks:
        feats, labels = _draw(task, task.n_samples, rng)
        if cfg.duplicate_fraction > 0:
            n_dup = int(round(cfg.duplicate_fraction * task.n_samples))
            n_proto = min(cfg.duplicate_prototypes, task.n_samples - n_dup)
            if n_dup and n_proto > 0:
                # hardness pulls prototypes toward the midpoint of the task's classes
                mid = task.centers.mean(axis=0)
                h = cfg.duplicate_hardness
                feats[:n_proto] = (1.0 - h) * feats[:n_proto] + h * mid
                src = rng.integers(0, n_proto, size=n_dup)
                feats[n_proto:n_proto + n_dup] = feats[src]
                labels[n_proto:n_proto + n_dup] = labels[src]
        tids = np.full(task.n_samples, task.task_id)
        if not cfg.shuffle_within_task:
            order = np.argsort(labels, kind="stable")
        else:
            order = rng.permutation(task.n_samples)
        feats, labels = feats[order], labels[order]
        if carry is not None:
            feats = np.concatenate([feats, carry[0]])
            labels = np.concatenate([labels, carry[1]])
            tids = np.concatenate([tids, carry[2]])
            mix = rng.permutation(len(labels))
            feats, labels, tids = feats[mix], labels[mix], tids[mix]
        carry = None
        n_rec = int(round(task.recurrence * task.n_samples))
        if n_rec:
            rf, rl = _draw(task, n_rec, rng)
            carry = (rf, rl, np.full(n_rec, task.task_id))
        segs.append((feats, labels, tids))
    return segs


def generate_stream(cfg: StreamConfig) -> list:
    """All training samples in arrival order, ids assigned sequentially."""
    rng = substream(cfg.seed, "stream")
    out = []
    for feats, labels, tids in _segments(cfg, rng):
        for f, y, t in zip(feats, labels, tids):
            out.append(Sample(len(out), f, int(y), int(t)))
    return out


def task_boundaries(cfg: StreamConfig) -> list:
    """Stream positions (exclusive ends) at which each task segment finishes."""
    ends, pos, carry = [], 0, 0
    for task in cfg.tasks:
        pos += task.n_samples + carry
        carry = int(round(task.recurrence * task.n_samples))
        ends.append(pos)
    return ends


def generate_test_sets(cfg: StreamConfig, per_task: int = 200) -> list:
    """Held-out ``(X, y)`` per task from a stream disjoint from training draws."""
    rng = substream(cfg.seed, "test")
    return [_draw(task, per_task, rng) for task in cfg.tasks]


@dataclass(frozen=True, eq=False)
class ToyModel:
    """Softmax regression; ``weights`` is ``(n_classes, feature_dim + 1)`` with
    the bias in the last column."""

    weights: np.ndarray
    learning_rate: float = 0.1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("model weights must be finite")

    @classmethod
    def zeros(cls, n_classes: int, feature_dim: int, learning_rate: float = 0.1):
        return cls(np.zeros((n_classes, feature_dim + 1)), learning_rate)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]


def augment(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)


def _check_labels(model, y):
    y = np.asarray(y)
    if np.any(y < 0) or np.any(y >= model.n_classes):
        raise ValueError(f"label outside [0, {model.n_classes})")
    return y


def batch_losses(model: ToyModel, x, y) -> np.ndarray:
    y = _check_labels(model, y)
    logp = log_softmax(augment(x) @ model.weights.T, axis=-1)
    return -logp[np.arange(len(y)), y]


def batch_gradients(model: ToyModel, x, y) -> np.ndarray:
    """Flattened per-sample cross-entropy gradients, shape ``(n, C * (D + 1))``."""
    y = _check_labels(model, y)
    xt = augment(x)
    resid = softmax(xt @ model.weights.T, axis=-1)
    resid[np.arange(len(y)), y] -= 1.0
    return np.einsum("nc,nd->ncd", resid, xt).reshape(len(y), -1)


def sample_loss(model: ToyModel, sample: Sample) -> float:
    return float(batch_losses(model, sample.features[None], [sample.label])[0])


def last_layer_gradient(model: ToyModel, sample: Sample,
                        counters: Optional[CostCounters] = None) -> np.ndarray:
    if not 0 <= sample.label < model.n_classes:
        raise ValueError(f"label {sample.label} outside [0, {model.n_classes})")
    xt = augment(sample.features)
    resid = softmax(model.weights @ xt)
    resid[sample.label] -= 1.0
    if counters is not None:
        counters.add(forward=1, last_layer_grad=1)
    return np.outer(resid, xt).ravel()


def train_step(model: ToyModel, subset: Sequence[Sample],
               counters: Optional[CostCounters] = None) -> ToyModel:
    """One SGD step on the mean cross-entropy of ``subset``."""
    if len(subset) == 0:
        return model
    x = np.stack([s.features for s in subset])
    y = np.array([s.label for s in subset])
    g = batch_gradients(model, x, y).mean(axis=0).reshape(model.weights.shape)
    if counters is not None:
        counters.add(backward=len(subset))
    return replace(model, weights=model.weights - model.learning_rate * g)


def accuracy(model: ToyModel, x, y) -> float:
    pred = np.argmax(augment(x) @ model.weights.T, axis=-1)
    return float(np.mean(pred == np.asarray(y)))


class EpisodicMemory:
    """Unbounded store of every encountered sample.

    ``exclude`` hides samples from future draws (once-only scoring mode)
    without removing them from the store.
    """

    def __init__(self):
        self.samples: list = []
        self.inserted = 0
        self._excluded: set = set()
        self._eligible: Optional[list] = None

    def __len__(self) -> int:
        return len(self.samples)

    def insert(self, samples) -> None:
        for s in samples:
            self.samples.append(s)
            self.inserted += 1
        self._eligible = None

    def exclude(self, ids) -> None:
        self._excluded.update(ids)
        self._eligible = None

    def _pool(self) -> list:
        if not self._excluded:
            return self.samples
        if self._eligible is None:
            self._eligible = [s for s in self.samples if s.id not in self._excluded]
        # an exhausted pool falls back to the whole memory
        return self._eligible or self.samples

    def sample_batch(self, n: int, rng: np.random.Generator, timestep: int = 0) -> Batch:
        pool = self._pool()
        if not pool:
            raise ValueError("cannot sample from an empty memory")
        idx = rng.choice(len(pool), size=n, replace=len(pool) < n)
        return Batch(timestep, tuple(pool[i] for i in idx))


def memory_insert(mem: EpisodicMemory, samples) -> EpisodicMemory:
    mem.insert(samples)
    return mem


def memory_sample_batch(mem: EpisodicMemory, n: int, rng: np.random.Generator,
                        timestep: int = 0) -> Batch:
    return mem.sample_batch(n, rng, timestep)


@dataclass(frozen=True)
class ModelParams:
    learning_rate: float = 0.05
    iterations_per_encounter: float = 0.125
    init_scale: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations_per_encounter <= 0:
            raise ValueError("iterations_per_encounter must be positive")
        if self.init_scale < 0:
            raise ValueError("init_scale must be non-negative")


@dataclass(frozen=True)
class EvalParams:
    eval_every: int = 0  # 0: accuracy only at task boundaries
    density_bandwidth: Optional[float] = None  # None: median heuristic
    density_max_points: int = 2000

    def __post_init__(self):
        if self.eval_every < 0:
            raise ValueError("eval_every must be non-negative")
        if self.density_bandwidth is not None and self.density_bandwidth <= 0:
            raise ValueError("density_bandwidth must be positive")
        if self.density_max_points < 2:
            raise ValueError("density_max_points must be >= 2")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    stream: StreamParams = field(default_factory=StreamParams)
    selector_name: str = "oasis"
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    prune_prob: float = 0.5
    reeligible: bool = True
    model: ModelParams = field(default_factory=ModelParams)
    metrics: EvalParams = field(default_factory=EvalParams)

    def __post_init__(self):
        if self.selector_name not in SELECTORS:
            raise ValueError(f"selector must be one of {SELECTORS}, got {self.selector_name!r}")
        if not 0.0 <= self.prune_prob <= 1.0:
            raise ValueError("prune_prob must lie in [0, 1]")


@dataclass
class RunRecord:
    config: dict
    seed: int
    selector: str
    threshold: Optional[float]
    acc_matrix: list
    a_avg: float
    a_last: float
    realized_ratio: float
    n_scored: int
    n_selected: int
    density: Optional[float]
    counters: dict
    informativeness_normality: Optional[dict]
    steps: list = field(default_factory=list)
    final_weights: Optional[np.ndarray] = field(default=None, repr=False)

    def summary(self) -> dict:
        """Everything except the step log and weights, in a fixed key order."""
        return {k: getattr(self, k) for k in (
            "selector", "seed", "threshold", "a_avg", "a_last", "realized_ratio",
            "n_scored", "n_selected", "density", "counters", "acc_matrix",
            "informativeness_normality", "config")}


def _init_model(cfg: RunConfig, n_classes: int) -> ToyModel:
    model = ToyModel.zeros(n_classes, cfg.stream.feature_dim, cfg.model.learning_rate)
    if cfg.model.init_scale > 0:
        rng = substream(cfg.seed, "model")
        w = cfg.model.init_scale * rng.normal(size=model.weights.shape)
        model = replace(model, weights=w)
    return model


def run_experiment(cfg: RunConfig, config_snapshot: Optional[dict] = None) -> RunRecord:
    """Run one seeded experiment end to end."""
    stream_cfg = cfg.stream.build(cfg.seed)
    samples = generate_stream(stream_cfg)
    ends = task_boundaries(stream_cfg)
    tests = generate_test_sets(stream_cfg, cfg.stream.test_per_task)
    n_b = stream_cfg.batch_size

    model = _init_model(cfg, stream_cfg.n_classes)
    counters = CostCounters()
    memory = EpisodicMemory()
    mem_rng = substream(cfg.seed, "memory")
    base_rng = substream(cfg.seed, "baseline")
    name = cfg.selector_name

    oasis = None
    threshold = None
    if name == "oasis":
        oasis = OasisSelector(replace(cfg.selector, seed=cfg.seed), substream(cfg.seed, "gating"))
        threshold = oasis.threshold
    budget = BudgetSchedule(cfg.selector.target_ratio, n_b)
    pruner = LossPruneSelector(cfg.prune_prob)
    by_id = {}

    steps, acc_rows, scored_info = [], [], []
    selected_events: list[int] = []
    n_scored = n_selected = 0
    t = 0
    end_to_task = {e: k for k, e in enumerate(ends)}
    ipe = cfg.model.iterations_per_encounter

    for pos, sample in enumerate(samples):
        memory.insert([sample])
        by_id[sample.id] = sample
        due = math.floor((pos + 1) * ipe + 1e-9)
        while t < due:
            batch = memory.sample_batch(n_b, mem_rng, t)
            x, y = batch.features(), batch.labels()
            record = {"t": t, "batch_ids": batch.ids}
            if name == "full":
                chosen = batch.ids
            elif name == "random":
                chosen = random_select(batch, budget.next_k(), base_rng)
            elif name == "loss_prune":
                losses = batch_losses(model, x, y)
                counters.add(forward=n_b)
                chosen = pruner.select(batch, losses, base_rng)
            else:
                grads = batch_gradients(model, x, y)
                counters.add(forward=n_b, last_layer_grad=n_b)
                scored_info.extend(batch_informativeness(grads).tolist())
                if name == "oasis":
                    decision = oasis.step(batch, grads)
                    chosen = list(decision.selected_ids)
                    record["threshold"] = decision.threshold
                    record["mu"] = decision.stats_after.mu
                    record["var"] = decision.stats_after.var
                elif name == "topk":
                    chosen = topk_norm_select(batch, grads, budget.next_k())
                else:
                    chosen = greedy_orthogonal_select(batch, grads, budget.next_k())

            n_scored += n_b
            n_selected += len(chosen)
            selected_events.extend(chosen)
            record["selected_ids"] = list(chosen)
            record["realized_ratio"] = n_selected / n_scored
            if not cfg.reeligible:
                chosen_set = set(chosen)
                memory.exclude(i for i in batch.ids if i not in chosen_set)
            model = train_step(model, [by_id[i] for i in chosen], counters)
            t += 1
            if cfg.metrics.eval_every and t % cfg.metrics.eval_every == 0:
                seen = sum(1 for e in ends if e <= pos + 1) + 1
                record["test_accuracy"] = float(np.mean(
                    [accuracy(model, *tests[k]) for k in range(min(seen, len(tests)))]))
            steps.append(record)
        if pos + 1 in end_to_task:
            k = end_to_task[pos + 1]
            acc_rows.append([accuracy(model, *tests[j]) for j in range(k + 1)])

    dens = None
    if len(selected_events) >= 2:
        ids = np.asarray(selected_events)
        if ids.size > cfg.metrics.density_max_points:
            pick = substream(cfg.seed, "density").choice(
                ids.size, size=cfg.metrics.density_max_points, replace=False)
            ids = ids[np.sort(pick)]
        dens = density(np.stack([by_id[int(i)].features for i in ids]),
                       cfg.metrics.density_bandwidth)

    normality = None
    if len(scored_info) >= 20 and np.ptp(scored_info) > 0:
        normality = normality_diagnostic(scored_info)

    return RunRecord(
        config=config_snapshot if config_snapshot is not None else {},
        seed=cfg.seed, selector=name, threshold=threshold,
        acc_matrix=acc_rows, a_avg=a_avg(acc_rows), a_last=a_last(acc_rows),
        realized_ratio=n_selected / n_scored if n_scored else 0.0,
        n_scored=n_scored, n_selected=n_selected, density=dens,
        counters=counters.as_dict(), informativeness_normality=normality,
        steps=steps, final_weights=model.weights)
