# Does the realized ratio match the budget?
# First with relative scores that really are N(0, 1), then on a live stream
# where the statistics are learned online from batch means.

import numpy as np

from oasis.core import Batch, Sample
from oasis.select import OasisSelector, SelectorConfig, oasis_select
from oasis.siren import SirenConfig
from oasis.stats import StreamStats

batch = Batch(0, tuple(Sample(i, np.zeros(1), 0, 0) for i in range(16)))
fixed = StreamStats(mu=10.0, var=1.0, batches_seen=1)
rng = np.random.default_rng(0)
for mode in ("per_sample_bernoulli", "shared_threshold"):
    cfg = SelectorConfig(target_ratio=0.125, gating_mode=mode, siren=SirenConfig(enabled=False))
    kept = 0
    for _ in range(5000):
        z = rng.standard_normal(16)
        d, _ = oasis_select(batch, np.diag(np.sqrt(10.0 + z)), fixed, cfg, rng)
        kept += len(d.selected_ids)
    print(f"{mode:<22} realized {kept / 80_000:.4f} (target 0.125)")

# Online statistics: the variance tracks batch means, not single samples,
# so Z-scores are inflated and the solved threshold over-selects.
# A small proportional controller on the threshold brings it back.
for gain in (None, 0.5):
    sel = OasisSelector(SelectorConfig(target_ratio=0.125, controller_gain=gain, seed=1))
    for t in range(2000):
        g = rng.gamma(2.0, 1.0, size=16)
        sel.step(Batch(t, batch.samples), np.diag(np.sqrt(g)))
    print(f"controller gain {gain}: realized {sel.realized_ratio:.4f}, threshold {sel.threshold:.3f}")
