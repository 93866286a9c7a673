import numpy as np
import pytest

from oasis.core import Sample
from oasis.metrics import CostCounters
from oasis.select import SelectorConfig
from oasis.sim import (EpisodicMemory, ModelParams, RunConfig, StreamConfig, StreamParams,
                       TaskSpec, ToyModel, batch_gradients, batch_losses, generate_stream,
                       generate_test_sets, last_layer_gradient, memory_insert,
                       memory_sample_batch, run_experiment, sample_loss, substream,
                       task_boundaries, train_step)

SMALL = StreamParams(task_sizes=(200, 120), feature_dim=8, center_spread=2.0, test_per_task=50)


def _two_task_cfg(scale=1.0, n=100):
    centers = np.array([[0.0, 0.0], [5.0, 5.0]])
    tasks = (TaskSpec(0, n, (0, 1), centers, scale), TaskSpec(1, n, (2, 3), centers + 10, scale))
    return StreamConfig(tasks, feature_dim=2, n_classes=4, seed=3)


def test_stream_order():
    stream = generate_stream(_two_task_cfg())
    assert len(stream) == 200
    assert [s.task_id for s in stream] == [0] * 100 + [1] * 100
    assert [s.id for s in stream] == list(range(200))


def test_zero_scale_hits_centers():
    cfg = _two_task_cfg(scale=0.0)
    for s in generate_stream(cfg):
        task = cfg.tasks[s.task_id]
        k = task.class_ids.index(s.label)
        np.testing.assert_array_equal(s.features, task.centers[k])


def test_class_means_converge():
    cfg = _two_task_cfg(scale=1.5, n=4000)
    stream = generate_stream(cfg)
    for task in cfg.tasks:
        for k, c in enumerate(task.class_ids):
            feats = np.stack([s.features for s in stream if s.label == c])
            bound = 3 * 1.5 / np.sqrt(len(feats))
            assert np.all(np.abs(feats.mean(axis=0) - task.centers[k]) < bound)


def test_stream_deterministic_and_seed_sensitive():
    a = generate_stream(SMALL.build(1))
    b = generate_stream(SMALL.build(1))
    c = generate_stream(SMALL.build(2))
    assert all(np.array_equal(x.features, y.features) for x, y in zip(a, b))
    assert not np.array_equal(a[0].features, c[0].features)


def test_test_sets_disjoint_from_stream():
    cfg = SMALL.build(0)
    stream = np.stack([s.features for s in generate_stream(cfg)])
    for x, _ in generate_test_sets(cfg, 50):
        assert not np.any((stream[:, None, :] == x[None, :, :]).all(axis=-1))


def test_boundaries_and_recurrence():
    p = StreamParams(task_sizes=(100, 50, 80), feature_dim=4, recurrence=0.2)
    cfg = p.build(0)
    ends = task_boundaries(cfg)
    assert ends == [100, 170, 260]
    stream = generate_stream(cfg)
    second = [s.task_id for s in stream[100:170]]
    assert second.count(0) == 20 and second.count(1) == 50


def test_duplicates_injected():
    p = StreamParams(task_sizes=(200,), feature_dim=4, duplicate_fraction=0.5,
                     duplicate_prototypes=3)
    feats = np.stack([s.features for s in generate_stream(p.build(0))])
    unique = np.unique(feats, axis=0)
    assert len(unique) == 200 - 100


def test_stream_config_validation():
    centers = np.zeros((2, 3))
    with pytest.raises(ValueError):
        StreamConfig((TaskSpec(0, 10, (0, 5), centers),), feature_dim=3, n_classes=4)
    with pytest.raises(ValueError):
        TaskSpec(0, 0, (0, 1), centers)
    with pytest.raises(ValueError):
        StreamConfig((TaskSpec(0, 10, (0, 1), centers),), feature_dim=2, n_classes=2)


def test_substreams_independent():
    a = substream(5, "memory").random(3)
    b = substream(5, "gating").random(3)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, substream(5, "memory").random(3))


def test_gradient_zero_weights():
    model = ToyModel.zeros(2, 1)
    g = last_layer_gradient(model, Sample(0, np.array([1.0]), 0, 0))
    np.testing.assert_allclose(g, [-0.5, -0.5, 0.5, 0.5])
    assert float(g @ g) == pytest.approx(1.0)


def test_gradient_saturated_model():
    w = np.array([[100.0, 0.0], [-100.0, 0.0]])
    g = last_layer_gradient(ToyModel(w), Sample(0, np.array([1.0]), 0, 0))
    assert np.linalg.norm(g) < 1e-6


def test_gradient_counts_and_label_check():
    counters = CostCounters()
    model = ToyModel.zeros(3, 2)
    last_layer_gradient(model, Sample(0, np.zeros(2), 1, 0), counters)
    assert counters.as_dict() == {"forward": 1, "last_layer_grad": 1, "backward": 0}
    with pytest.raises(ValueError):
        last_layer_gradient(model, Sample(0, np.zeros(2), 3, 0))


def _fd_gradient(model, sample, h=1e-5):
    w = model.weights
    out = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        plus, minus = w.copy(), w.copy()
        plus[idx] += h
        minus[idx] -= h
        out[idx] = (sample_loss(ToyModel(plus), sample) - sample_loss(ToyModel(minus), sample)) / (2 * h)
    return out.ravel()


def test_gradient_finite_differences():
    rng = np.random.default_rng(12)
    for _ in range(20):
        c, d = rng.integers(2, 5), rng.integers(1, 5)
        model = ToyModel(rng.normal(size=(c, d + 1)))
        sample = Sample(0, rng.normal(size=d), int(rng.integers(c)), 0)
        g = last_layer_gradient(model, sample)
        fd = _fd_gradient(model, sample)
        assert np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12) < 1e-4


def test_batch_gradients_match_single():
    rng = np.random.default_rng(13)
    model = ToyModel(rng.normal(size=(3, 5)))
    x, y = rng.normal(size=(6, 4)), rng.integers(0, 3, size=6)
    rows = batch_gradients(model, x, y)
    for i in range(6):
        np.testing.assert_allclose(rows[i], last_layer_gradient(model, Sample(i, x[i], int(y[i]), 0)),
                                   atol=1e-14)
    np.testing.assert_allclose(batch_losses(model, x, y)[2], sample_loss(model, Sample(2, x[2], int(y[2]), 0)))


def test_train_step_empty_and_single():
    model = ToyModel(np.arange(6.0).reshape(2, 3) / 10, learning_rate=0.3)
    assert train_step(model, []) is model
    s = Sample(0, np.array([0.5, -1.0]), 1, 0)
    counters = CostCounters()
    new = train_step(model, [s], counters)
    expected = model.weights - 0.3 * last_layer_gradient(model, s).reshape(2, 3)
    np.testing.assert_allclose(new.weights, expected, atol=1e-15)
    assert counters.backward == 1


def test_train_step_descends():
    rng = np.random.default_rng(14)
    model = ToyModel(rng.normal(size=(3, 5)), learning_rate=1e-2)
    batch = [Sample(i, rng.normal(size=4), int(rng.integers(3)), 0) for i in range(16)]
    x = np.stack([s.features for s in batch])
    y = np.array([s.label for s in batch])
    before = batch_losses(model, x, y).mean()
    after = batch_losses(train_step(model, batch), x, y).mean()
    assert after < before


def test_memory_permutation_and_small_mode():
    rng = np.random.default_rng(0)
    mem = memory_insert(EpisodicMemory(), [Sample(i, np.zeros(1), 0, 0) for i in range(5)])
    assert sorted(memory_sample_batch(mem, 5, rng).ids) == [0, 1, 2, 3, 4]
    small = memory_insert(EpisodicMemory(), [Sample(i, np.zeros(1), 0, 0) for i in range(3)])
    batch = memory_sample_batch(small, 16, rng)
    assert len(batch) == 16 and set(batch.ids) <= {0, 1, 2}
    with pytest.raises(ValueError):
        EpisodicMemory().sample_batch(1, rng)


def test_memory_uniform_inclusion():
    rng = np.random.default_rng(1)
    mem = memory_insert(EpisodicMemory(), [Sample(i, np.zeros(1), 0, 0) for i in range(100)])
    counts = np.zeros(100)
    for _ in range(10_000):
        counts[mem.sample_batch(16, rng).ids] += 1
    p = 0.16
    sigma = np.sqrt(10_000 * p * (1 - p))
    dev = np.abs(counts - 10_000 * p) / sigma
    # 100 simultaneous 3-sigma checks miss about once by chance
    assert np.mean(dev < 3) >= 0.97
    assert np.all(dev < 4.5)


def test_memory_exclude_falls_back_when_exhausted():
    mem = memory_insert(EpisodicMemory(), [Sample(i, np.zeros(1), 0, 0) for i in range(4)])
    mem.exclude([0, 1])
    assert set(mem.sample_batch(2, np.random.default_rng(0)).ids) == {2, 3}
    mem.exclude([2, 3])
    assert len(mem.sample_batch(4, np.random.default_rng(0))) == 4


def _run(name, **kw):
    sel = kw.pop("selector", SelectorConfig())
    stream = kw.pop("stream", SMALL)
    return run_experiment(RunConfig(seed=kw.pop("seed", 0), stream=stream, selector_name=name,
                                    selector=sel, **kw))


def test_full_selector_separable():
    stream = StreamParams(task_sizes=(1000,), feature_dim=8, center_spread=3.0, test_per_task=200)
    rec = _run("full", stream=stream, model=ModelParams(iterations_per_encounter=0.5))
    assert rec.a_last > 0.95
    assert rec.realized_ratio == 1.0


def test_unreachable_threshold_keeps_initial_model():
    rec = _run("oasis", selector=SelectorConfig(threshold=50.0))
    assert rec.n_selected == 0
    np.testing.assert_array_equal(rec.final_weights, np.zeros_like(rec.final_weights))
    assert rec.counters["backward"] == 0


def test_run_deterministic():
    a, b = _run("oasis", seed=4), _run("oasis", seed=4)
    assert a.summary() == b.summary()
    assert a.steps == b.steps
    np.testing.assert_array_equal(a.final_weights, b.final_weights)


def test_memory_holds_every_sample_once():
    cfg = SMALL.build(0)
    stream = generate_stream(cfg)
    mem = EpisodicMemory()
    for s in stream:
        mem.insert([s])
    assert [s.id for s in mem.samples] == list(range(len(stream)))
    assert mem.inserted == len(stream)


@pytest.mark.parametrize("name", ["oasis", "random", "topk", "greedy_orthogonal", "loss_prune", "full"])
def test_selectors_run_and_count(name):
    rec = _run(name)
    c = rec.counters
    assert c["backward"] == rec.n_selected
    assert len(rec.acc_matrix) == 2 and len(rec.acc_matrix[-1]) == 2
    assert all(0.0 <= a <= 1.0 for row in rec.acc_matrix for a in row)
    if name in ("oasis", "topk", "greedy_orthogonal"):
        assert c["forward"] == c["last_layer_grad"] == rec.n_scored
        assert c["backward"] <= c["forward"]
    elif name == "loss_prune":
        assert c["forward"] == rec.n_scored and c["last_layer_grad"] == 0
    else:
        assert c["forward"] == 0
    if name in ("random", "topk", "greedy_orthogonal"):
        assert abs(rec.n_selected - 0.25 * rec.n_scored) <= 0.5


def test_steps_are_causal():
    rec = _run("oasis", seed=1)
    for step in rec.steps:
        # at 0.125 iterations per sample, batch t is drawn after 8 (t + 1) arrivals
        assert max(step["batch_ids"]) < 8 * (step["t"] + 1)
        assert set(step["selected_ids"]) <= set(step["batch_ids"])


def test_scoring_has_no_backward():
    rng = np.random.default_rng(3)
    model = ToyModel(rng.normal(size=(3, 5)))
    counters = CostCounters()
    for i in range(5):
        last_layer_gradient(model, Sample(i, rng.normal(size=4), 0, 0), counters)
    assert counters.backward == 0
    assert counters.forward == counters.last_layer_grad == 5


def test_once_only_mode_runs():
    rec = _run("oasis", reeligible=False)
    assert rec.n_scored > 0


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(selector_name="nope")
    with pytest.raises(ValueError):
        ModelParams(learning_rate=0)
