# Redundancy discounting inside one batch.
# Samples are picked greedily by their current adjusted value; after each
# pick the rest are re-scored from their raw value minus cosine-weighted
# overlap with every subset of the picked set (signs alternate with subset size).

import numpy as np

from oasis.core import batch_informativeness
from oasis.siren import SirenConfig, adjust_batch, brute_force_oracle

# a near-copy alone: after the original is picked the copy drops below zero
pair = np.array([[3.0, 0.0, 0.0], [2.9, 0.1, 0.0]])
adjusted, picks = adjust_batch(batch_informativeness(pair), pair)
print("near-copy pair  ", np.round(adjusted, 3), "picks", picks)

# add an unrelated gradient: it is picked second, and the pair term for
# {original, unrelated} adds part of the copy's discount back
grads = np.vstack([pair, [0.0, 0.0, 2.0]])
info = batch_informativeness(grads)
adjusted, picks = adjust_batch(info, grads)
print("raw             ", np.round(info, 3))
print("adjusted        ", np.round(adjusted, 3), "picks", picks)

# exact mode sums over every subset and matches direct enumeration
rng = np.random.default_rng(1)
g = rng.normal(size=(10, 6))
i = (g ** 2).sum(axis=1)
exact, _ = adjust_batch(i, g, SirenConfig(exact_mode=True))
reference, _ = brute_force_oracle(i, g)
print("exact vs enumeration, max diff:", np.max(np.abs(exact - reference)))

# truncating the alternating sum does not converge toward the exact value:
# partial sums swing wider as the order grows
for order in (1, 2, 3, 4):
    capped, _ = adjust_batch(i, g, SirenConfig(max_order=order))
    print(f"max_order {order}: max |capped - exact| / mean I = "
          f"{np.max(np.abs(capped - exact)) / i.mean():.2f}")
