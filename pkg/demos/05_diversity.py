# Diversity of the selected set on a clustered stream.
# Half of each task is copies of four prototypes placed near the class
# boundary, where gradients are large. Top-k by gradient norm piles onto the
# copies; OASIS discounts them within each batch.

from dataclasses import replace

from oasis.select import SelectorConfig
from oasis.sim import EvalParams, RunConfig, StreamParams, run_experiment

stream = StreamParams(duplicate_fraction=0.5, duplicate_hardness=0.8)
metrics = EvalParams(density_bandwidth=11.0)  # pinned so runs are comparable
cfg = SelectorConfig(target_ratio=0.25, controller_gain=0.5)

for seed in range(3):
    o = run_experiment(RunConfig(seed=seed, stream=stream, selector=cfg, metrics=metrics))
    t = run_experiment(RunConfig(seed=seed, stream=stream, selector_name="topk",
                                 selector=replace(cfg, target_ratio=o.realized_ratio),
                                 metrics=metrics))
    print(f"seed {seed}: density oasis {o.density:.4f}  topk {t.density:.4f}  (lower is more diverse)")
