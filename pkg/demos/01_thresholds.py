# Thresholds for a target selection ratio.
# Under a standard-normal relative score, the gate keeps a sample with
# probability sigmoid(2 (z - I_T)). The threshold is chosen so the expected
# keep rate equals the budget.

import numpy as np

from oasis.stats import ThresholdSolverConfig, expected_selection_rate, solve_threshold

for r in (0.0625, 0.125, 0.25, 0.5):
    t = solve_threshold(r)
    print(f"r = {r:<7} I_T = {t:+.4f}  check: rate(I_T) = {expected_selection_rate(t):.6f}")

# the gate slope matters: a unit-slope gate is much softer and needs a higher threshold
soft = ThresholdSolverConfig(gate_slope=1.0)
print("unit slope, r = 0.125:", round(solve_threshold(0.125, soft), 4))

# Monte Carlo sanity check of the expected rate
rng = np.random.default_rng(0)
z = rng.standard_normal(1_000_000)
t = solve_threshold(0.125)
kept = rng.random(z.size) < 1.0 / (1.0 + np.exp(-2.0 * (z - t)))
print("simulated keep rate at r = 0.125:", kept.mean())
