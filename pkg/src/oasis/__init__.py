"""Online sample selection by relative gradient informativeness.

The selection step scores each incoming sample by the squared norm of its
last-layer gradient, discounts redundancy within the batch, normalises the
result against running stream statistics and keeps each sample with a
sigmoid-gated probability.
"""
from .core import (Batch, Sample, ScoredSample, batch_informativeness, cosine_similarity,
                   informativeness, mean_gradient)
from .metrics import CostCounters, a_avg, a_last, density, normality_diagnostic
from .select import (BudgetSchedule, LossPruneSelector, OasisSelector, SelectionDecision,
                     SelectorConfig, greedy_orthogonal_select, loss_prune_select, oasis_select,
                     random_select, ratio_controller_step, topk_norm_select)
from .siren import SirenConfig, adjust_batch, brute_force_oracle
from .sim import (RunConfig, RunRecord, StreamConfig, StreamParams, TaskSpec, ToyModel,
                  generate_stream, last_layer_gradient, run_experiment, train_step)
from .stats import (StreamStats, ThresholdSolverConfig, expected_selection_rate, init_stats,
                    solve_threshold, update_stats, z_normalize)

__version__ = "0.1.0"

__all__ = [
    "Batch", "Sample", "ScoredSample", "batch_informativeness", "cosine_similarity",
    "informativeness", "mean_gradient",
    "CostCounters", "a_avg", "a_last", "density", "normality_diagnostic",
    "BudgetSchedule", "LossPruneSelector", "OasisSelector", "SelectionDecision",
    "SelectorConfig", "greedy_orthogonal_select", "loss_prune_select", "oasis_select",
    "random_select", "ratio_controller_step", "topk_norm_select",
    "SirenConfig", "adjust_batch", "brute_force_oracle",
    "RunConfig", "RunRecord", "StreamConfig", "StreamParams", "TaskSpec", "ToyModel",
    "generate_stream", "last_layer_gradient", "run_experiment", "train_step",
    "StreamStats", "ThresholdSolverConfig", "expected_selection_rate", "init_stats",
    "solve_threshold", "update_stats", "z_normalize",
]
